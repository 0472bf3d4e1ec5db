//! The nine agent roles, their instructions, and their toolsets.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use super::tools::{RegistryError, ToolRegistry};
use crate::protocol::RoleName;

pub const ROLES_JSON: &str = include_str!("../../data/roles.json");

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRole {
    pub name: RoleName,
    pub team: String,
    pub system_message: String,
    pub toolset: Vec<String>,
}

impl AgentRole {
    pub fn may_call(&self, tool: &str) -> bool {
        self.toolset.iter().any(|t| t == tool)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoleDoc {
    team: String,
    system_message: String,
    toolset: Vec<String>,
}

/// Parses a roles document: an object keyed by role name.
pub fn parse_roles(text: &str) -> Result<Vec<AgentRole>, RegistryError> {
    let docs: BTreeMap<String, RoleDoc> =
        serde_json::from_str(text).map_err(|e| RegistryError::Roles(e.to_string()))?;
    let mut roles = Vec::with_capacity(RoleName::ALL.len());
    for name in RoleName::ALL {
        let doc = docs
            .get(name.as_str())
            .ok_or_else(|| RegistryError::Roles(format!("role {name} is missing")))?;
        roles.push(AgentRole {
            name,
            team: doc.team.clone(),
            system_message: doc.system_message.clone(),
            toolset: doc.toolset.clone(),
        });
    }
    if let Some(extra) = docs.keys().find(|k| k.parse::<RoleName>().is_err()) {
        return Err(RegistryError::Roles(format!("unknown role `{extra}`")));
    }
    Ok(roles)
}

/// The shipped roles, in pipeline order.
pub fn builtin_roles() -> &'static [AgentRole] {
    static ROLES: OnceLock<Vec<AgentRole>> = OnceLock::new();
    ROLES.get_or_init(|| parse_roles(ROLES_JSON).expect("shipped roles parse"))
}

pub fn role(name: RoleName) -> &'static AgentRole {
    builtin_roles()
        .iter()
        .find(|r| r.name == name)
        .expect("every role is shipped")
}

/// Toolsets must be pairwise disjoint and together cover the registry exactly.
pub fn check_toolsets(roles: &[AgentRole], registry: &ToolRegistry) -> Result<(), RegistryError> {
    let mut owner: BTreeMap<&str, RoleName> = BTreeMap::new();
    for r in roles {
        for t in &r.toolset {
            if registry.get(t).is_none() {
                return Err(RegistryError::Unknown(t.clone()));
            }
            if let Some(prev) = owner.insert(t, r.name) {
                return Err(RegistryError::Roles(format!(
                    "tool `{t}` belongs to both {prev} and {}",
                    r.name
                )));
            }
        }
    }
    if let Some(orphan) = registry.names().find(|n| !owner.contains_key(n)) {
        return Err(RegistryError::Roles(format!(
            "tool `{orphan}` has no owning role"
        )));
    }
    Ok(())
}
