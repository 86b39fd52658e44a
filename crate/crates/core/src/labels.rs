//! Canonical rating vocabulary and protected-attribute category tokens.

/// The fourteen rating categories viewers can assign to a talk.
pub const RATING_LABELS: [&str; 14] = [
    "beautiful",
    "confusing",
    "courageous",
    "fascinating",
    "funny",
    "informative",
    "ingenious",
    "inspiring",
    "jaw_dropping",
    "longwinded",
    "obnoxious",
    "ok",
    "persuasive",
    "unconvincing",
];

pub const GENDER_CATEGORIES: [&str; 3] = ["male", "female", "other"];
pub const RACE_CATEGORIES: [&str; 4] = ["white", "asian", "black", "other"];

pub fn default_labels() -> Vec<String> {
    RATING_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Known category order for an attribute, first entry privileged.
pub fn known_categories(attribute: &str) -> Option<&'static [&'static str]> {
    match attribute {
        "gender" => Some(&GENDER_CATEGORIES),
        "race" => Some(&RACE_CATEGORIES),
        _ => None,
    }
}
