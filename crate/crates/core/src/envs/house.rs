//! Text household: named surfaces and containers holding objects.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{normalize_action, EnvError, Predicate};

pub const NO_MATCH: &str = "No known action matches that input.";

/// An object entry: a bare name, or a name with an explicit article
/// (use `""` for plurals such as "pens").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemEntry {
    Name(String),
    Detailed { name: String, article: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationConfig {
    pub name: String,
    #[serde(default)]
    pub container: bool,
    #[serde(default)]
    pub open: bool,
    #[serde(default)]
    pub objects: Vec<ItemEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseConfig {
    pub locations: Vec<LocationConfig>,
    /// Objects that respond to "use".
    #[serde(default)]
    pub usable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub name: String,
    article: String,
}

impl Item {
    fn from_entry(e: &ItemEntry) -> Self {
        match e {
            ItemEntry::Name(name) => Item {
                article: default_article(name).to_string(),
                name: name.clone(),
            },
            ItemEntry::Detailed { name, article } => Item {
                name: name.clone(),
                article: article.clone(),
            },
        }
    }

    fn phrase(&self) -> String {
        if self.article.is_empty() {
            self.name.clone()
        } else {
            format!("{} {}", self.article, self.name)
        }
    }
}

fn default_article(name: &str) -> &'static str {
    match name.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

/// "a x", "a x, and a y", "a x, a y, and a z"; "nothing" when empty.
pub fn list_phrase(phrases: &[String]) -> String {
    match phrases {
        [] => "nothing".to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub name: String,
    pub container: bool,
    pub open: bool,
    pub items: Vec<Item>,
}

impl Location {
    fn accessible(&self) -> bool {
        !self.container || self.open
    }

    fn contents(&self) -> String {
        list_phrase(&self.items.iter().map(Item::phrase).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextHouse {
    pub locations: Vec<Location>,
    pub at: Option<usize>,
    pub inventory: Option<Item>,
    pub seen: BTreeSet<String>,
    pub used: BTreeSet<String>,
    usable: Vec<String>,
}

impl TextHouse {
    pub fn new(cfg: &HouseConfig) -> Result<Self, EnvError> {
        if cfg.locations.is_empty() {
            return Err(EnvError::Invalid("house has no locations".into()));
        }
        let mut locations = Vec::new();
        for l in &cfg.locations {
            if locations.iter().any(|o: &Location| o.name == l.name) {
                return Err(EnvError::Invalid(format!("duplicate location {}", l.name)));
            }
            if l.open && !l.container {
                return Err(EnvError::Invalid(format!("{} is not a container and cannot be open", l.name)));
            }
            locations.push(Location {
                name: l.name.clone(),
                container: l.container,
                open: l.open,
                items: l.objects.iter().map(Item::from_entry).collect(),
            });
        }
        Ok(TextHouse {
            locations,
            at: None,
            inventory: None,
            seen: BTreeSet::new(),
            used: BTreeSet::new(),
            usable: cfg.usable.clone(),
        })
    }

    pub fn initial_observation(&self) -> String {
        let names: Vec<String> = self
            .locations
            .iter()
            .map(|l| format!("{} {}", default_article(&l.name), l.name))
            .collect();
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            list_phrase(&names)
        )
    }

    fn here(&self) -> Option<&Location> {
        self.at.map(|i| &self.locations[i])
    }

    fn describe(&mut self, i: usize) -> String {
        let loc = &self.locations[i];
        let text = if !loc.container {
            format!("On the {}, you see {}.", loc.name, loc.contents())
        } else if loc.open {
            format!("The {} is open. In it, you see {}.", loc.name, loc.contents())
        } else {
            format!("The {} is closed.", loc.name)
        };
        if loc.accessible() {
            let names: Vec<String> = loc.items.iter().map(|it| it.name.clone()).collect();
            self.seen.extend(names);
        }
        text
    }

    fn reachable_items(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if let Some(loc) = self.here().filter(|l| l.accessible()) {
            out.extend(loc.items.iter().map(|it| it.name.as_str()));
        }
        if let Some(held) = &self.inventory {
            out.push(&held.name);
        }
        out
    }

    pub fn valid_actions(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.locations.iter().enumerate() {
            if Some(i) != self.at {
                out.push(format!("go to {}", l.name));
            }
        }
        if let Some(loc) = self.here() {
            if loc.container {
                out.push(format!("{} {}", if loc.open { "close" } else { "open" }, loc.name));
            }
            if loc.accessible() {
                match &self.inventory {
                    None => out.extend(loc.items.iter().map(|it| format!("take {} from {}", it.name, loc.name))),
                    Some(held) => out.push(format!("put {} in/on {}", held.name, loc.name)),
                }
            }
            out.push(format!("examine {}", loc.name));
        }
        if let Some(held) = &self.inventory {
            out.push(format!("examine {}", held.name));
        }
        for name in self.reachable_items() {
            if self.usable.iter().any(|u| u == name) {
                out.push(format!("use {name}"));
            }
        }
        out.push("inventory".to_string());
        out
    }

    /// Maps a normalized action onto its canonical valid form.
    pub fn resolve(&self, action: &str) -> Option<String> {
        self.valid_actions().into_iter().find(|v| {
            let v = normalize_action(v);
            v == action
                || (v.contains(" in/on ")
                    && (v.replacen(" in/on ", " in ", 1) == action || v.replacen(" in/on ", " on ", 1) == action))
        })
    }

    /// Applies a canonical action from `valid_actions`.
    pub fn apply(&mut self, action: &str) -> String {
        if action == "inventory" {
            return match &self.inventory {
                Some(it) => format!("You are carrying: {}.", it.phrase()),
                None => "You are not carrying anything.".into(),
            };
        }
        if let Some(name) = action.strip_prefix("go to ") {
            let Some(i) = self.locations.iter().position(|l| l.name == name) else {
                return NO_MATCH.into();
            };
            self.at = Some(i);
            return self.describe(i);
        }
        if let Some(name) = action.strip_prefix("open ") {
            let i = self.at.expect("open requires a location");
            debug_assert_eq!(self.locations[i].name, name);
            self.locations[i].open = true;
            return format!("You open the {name}. {}", self.describe(i));
        }
        if let Some(name) = action.strip_prefix("close ") {
            let i = self.at.expect("close requires a location");
            self.locations[i].open = false;
            return format!("You close the {name}.");
        }
        if let Some(rest) = action.strip_prefix("take ") {
            let i = self.at.expect("take requires a location");
            let loc_name = self.locations[i].name.clone();
            let obj = rest.strip_suffix(&format!(" from {loc_name}")).unwrap_or(rest);
            let Some(pos) = self.locations[i].items.iter().position(|it| it.name == obj) else {
                return NO_MATCH.into();
            };
            let item = self.locations[i].items.remove(pos);
            self.inventory = Some(item);
            return format!("You pick up the {obj} from {loc_name}.");
        }
        if action.starts_with("put ") {
            let i = self.at.expect("put requires a location");
            let item = self.inventory.take().expect("put requires a held object");
            let text = format!("You put the {} in/on the {}.", item.name, self.locations[i].name);
            self.locations[i].items.push(item);
            return text;
        }
        if let Some(name) = action.strip_prefix("use ") {
            self.used.insert(name.to_string());
            return format!("You turn on the {name}.");
        }
        if let Some(name) = action.strip_prefix("examine ") {
            if let Some(i) = self.at.filter(|i| self.locations[*i].name == name) {
                return self.describe(i);
            }
            return format!("There's nothing special about the {name}.");
        }
        NO_MATCH.into()
    }

    pub fn holds(&self, p: &Predicate) -> Option<bool> {
        Some(match p {
            Predicate::At(name) => self.here().is_some_and(|l| l.name == *name),
            Predicate::Seen(name) => self.seen.contains(name),
            Predicate::Holding(name) => self.inventory.as_ref().is_some_and(|it| it.name == *name),
            Predicate::Opened(name) => self.locations.iter().any(|l| l.name == *name && l.open),
            Predicate::Used(name) => self.used.contains(name),
            Predicate::In { object, location } => self
                .locations
                .iter()
                .any(|l| l.name == *location && l.items.iter().any(|it| it.name == *object)),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house() -> TextHouse {
        let cfg: HouseConfig = serde_json::from_str(
            r#"{"locations": [
                {"name": "desk 1", "objects": ["desklamp", "keychain"]},
                {"name": "cabinet 1", "container": true, "objects": ["soapbar", "egg"]},
                {"name": "drawer 1", "container": true}
              ],
              "usable": ["desklamp"]}"#,
        )
        .unwrap();
        TextHouse::new(&cfg).unwrap()
    }

    #[test]
    fn initial_listing() {
        assert_eq!(
            house().initial_observation(),
            "You are in the middle of a room. Looking quickly around you, you see a desk 1, a cabinet 1, and a drawer 1."
        );
    }

    #[test]
    fn open_container_lists_contents() {
        let mut h = house();
        assert_eq!(h.apply("go to cabinet 1"), "The cabinet 1 is closed.");
        assert!(h.valid_actions().contains(&"open cabinet 1".to_string()));
        assert!(!h.valid_actions().iter().any(|a| a.starts_with("take")));
        assert_eq!(
            h.apply("open cabinet 1"),
            "You open the cabinet 1. The cabinet 1 is open. In it, you see a soapbar, and an egg."
        );
        assert!(h.seen.contains("egg"));
        h.apply("go to drawer 1");
        assert_eq!(h.apply("open drawer 1"), "You open the drawer 1. The drawer 1 is open. In it, you see nothing.");
    }

    #[test]
    fn take_and_put_round_trip() {
        let mut h = house();
        h.apply("go to desk 1");
        let valid = h.valid_actions();
        assert!(valid.contains(&"take desklamp from desk 1".to_string()));
        assert!(valid.contains(&"take keychain from desk 1".to_string()));
        assert!(valid.contains(&"use desklamp".to_string()));
        assert_eq!(h.apply("take keychain from desk 1"), "You pick up the keychain from desk 1.");
        assert_eq!(h.holds(&Predicate::Holding("keychain".into())), Some(true));
        assert!(!h.valid_actions().iter().any(|a| a.starts_with("take")));
        h.apply("go to drawer 1");
        h.apply("open drawer 1");
        assert_eq!(h.resolve("put keychain in drawer 1").as_deref(), Some("put keychain in/on drawer 1"));
        h.apply("put keychain in/on drawer 1");
        assert_eq!(
            h.holds(&Predicate::In {
                object: "keychain".into(),
                location: "drawer 1".into()
            }),
            Some(true)
        );
    }

    #[test]
    fn plural_items_without_article() {
        let cfg: HouseConfig = serde_json::from_str(
            r#"{"locations": [{"name": "desk 2", "objects": [{"name": "alarm clock", "article": "an"}, "bowl", {"name": "CDs", "article": ""}]}]}"#,
        )
        .unwrap();
        let mut h = TextHouse::new(&cfg).unwrap();
        assert_eq!(h.apply("go to desk 2"), "On the desk 2, you see an alarm clock, a bowl, and CDs.");
    }

    #[test]
    fn closed_container_hides_items() {
        let mut h = house();
        h.apply("go to cabinet 1");
        assert_eq!(h.holds(&Predicate::Seen("egg".into())), Some(false));
        assert_eq!(h.holds(&Predicate::NextTo("egg".into())), None);
    }
}
