//! The six operational primitives and their exact text forms.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Go,
    Use,
    Leave,
    Take,
    Put,
    Chat,
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Go => "go",
            Self::Use => "use",
            Self::Leave => "leave",
            Self::Take => "take",
            Self::Put => "put",
            Self::Chat => "chat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    GoTo(String),
    Use(String),
    Leave(String),
    Take { item: String, from: String },
    Put { item: String, onto: String },
    Chat { target: String, content: Option<String> },
}

impl Action {
    /// Parses one action string. Matching is case-sensitive.
    pub fn parse(text: &str) -> Option<Self> {
        let nonempty = |s: &str| (!s.is_empty()).then(|| s.to_string());
        if let Some(rest) = text.strip_prefix("go to ") {
            return nonempty(rest).map(Self::GoTo);
        }
        if let Some(rest) = text.strip_prefix("use ") {
            return nonempty(rest).map(Self::Use);
        }
        if let Some(rest) = text.strip_prefix("leave ") {
            return nonempty(rest).map(Self::Leave);
        }
        if let Some(rest) = text.strip_prefix("take ") {
            let (item, from) = rest.split_once(" from ")?;
            return Some(Self::Take {
                item: nonempty(item)?,
                from: nonempty(from)?,
            });
        }
        if let Some(rest) = text.strip_prefix("put ") {
            let (item, onto) = rest.split_once(" in/on ")?;
            return Some(Self::Put {
                item: nonempty(item)?,
                onto: nonempty(onto)?,
            });
        }
        if let Some(rest) = text.strip_prefix("chat with ") {
            return match rest.split_once(": ") {
                Some((target, content)) => Some(Self::Chat {
                    target: nonempty(target)?,
                    content: Some(content.to_string()),
                }),
                None => Some(Self::Chat {
                    target: nonempty(rest)?,
                    content: None,
                }),
            };
        }
        None
    }

    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Self::GoTo(_) => PrimitiveKind::Go,
            Self::Use(_) => PrimitiveKind::Use,
            Self::Leave(_) => PrimitiveKind::Leave,
            Self::Take { .. } => PrimitiveKind::Take,
            Self::Put { .. } => PrimitiveKind::Put,
            Self::Chat { .. } => PrimitiveKind::Chat,
        }
    }

    /// The action with any chat content stripped, as listed in an action space.
    pub fn stem(&self) -> String {
        match self {
            Self::Chat { target, .. } => format!("chat with {target}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GoTo(place) => write!(f, "go to {place}"),
            Self::Use(thing) => write!(f, "use {thing}"),
            Self::Leave(what) => write!(f, "leave {what}"),
            Self::Take { item, from } => write!(f, "take {item} from {from}"),
            Self::Put { item, onto } => write!(f, "put {item} in/on {onto}"),
            Self::Chat {
                target,
                content: None,
            } => write!(f, "chat with {target}"),
            Self::Chat {
                target,
                content: Some(c),
            } => write!(f, "chat with {target}: {c}"),
        }
    }
}

/// Primitive kind of an action string, if it parses.
pub fn primitive_kind(text: &str) -> Option<PrimitiveKind> {
    Action::parse(text).map(|a| a.kind())
}
