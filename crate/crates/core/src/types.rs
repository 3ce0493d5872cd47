use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The four roles a record can play in a quadruplet corpus.
///
/// The derived `Ord` follows the target radial hierarchy: safe text closest
/// to the root, unsafe images farthest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentType {
    SafeText,
    SafeImage,
    UnsafeText,
    UnsafeImage,
}

impl ContentType {
    /// All content types in hierarchy order.
    pub const ALL: [ContentType; 4] = [
        ContentType::SafeText,
        ContentType::SafeImage,
        ContentType::UnsafeText,
        ContentType::UnsafeImage,
    ];

    /// Stable index used for role-keyed arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_text(self) -> bool {
        matches!(self, ContentType::SafeText | ContentType::UnsafeText)
    }

    pub fn is_unsafe(self) -> bool {
        matches!(self, ContentType::UnsafeText | ContentType::UnsafeImage)
    }

    /// Short display label ("T", "I", "T*", "I*").
    pub fn symbol(self) -> &'static str {
        match self {
            ContentType::SafeText => "T",
            ContentType::SafeImage => "I",
            ContentType::UnsafeText => "T*",
            ContentType::UnsafeImage => "I*",
        }
    }
}

impl fmt::Display for ContentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ContentType::SafeText => "safe_text",
            ContentType::SafeImage => "safe_image",
            ContentType::UnsafeText => "unsafe_text",
            ContentType::UnsafeImage => "unsafe_image",
        };
        f.write_str(name)
    }
}

impl FromStr for ContentType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "safe_text" => Ok(ContentType::SafeText),
            "safe_image" => Ok(ContentType::SafeImage),
            "unsafe_text" => Ok(ContentType::UnsafeText),
            "unsafe_image" => Ok(ContentType::UnsafeImage),
            other => Err(format!("unknown content type: {other}")),
        }
    }
}
