use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_RELATIONSHIPS: [&str; 6] = ["scoop", "pour", "cut", "contain", "wipe", "dump"];

pub const TOOL_NAMES: [&str; 13] = [
    "pan", "spatula", "plate", "knife", "bowl", "cloth", "fork", "mug", "spoon", "brush", "cup", "pot", "can",
];

const FOOD_NAMES: [&str; 6] = ["apple", "banana", "carrot", "tomato", "bread", "potato"];

// Relationship ids: 1 scoop, 2 pour, 3 cut, 4 contain, 5 wipe, 6 dump.
const TOOL_ATTRIBUTES: [(&str, &[usize]); 13] = [
    ("pan", &[4, 2]),
    ("spatula", &[1]),
    ("plate", &[4]),
    ("knife", &[3]),
    ("bowl", &[2, 4]),
    ("cloth", &[5]),
    ("fork", &[3]),
    ("mug", &[2, 4]),
    ("spoon", &[1]),
    ("brush", &[5]),
    ("cup", &[2, 4]),
    ("pot", &[4, 2, 6]),
    ("can", &[6, 2]),
];

// Which relationships each receiving archetype accepts as the object.
const RECEIVERS: [(&str, &[usize]); 6] = [
    ("pan", &[1, 2, 5, 6]),
    ("plate", &[5, 6]),
    ("bowl", &[1, 2, 6]),
    ("mug", &[2]),
    ("cup", &[2]),
    ("pot", &[1, 2, 6]),
];

const FOOD_RECEIVES: &[usize] = &[3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    /// One 0/1 flag per relationship: can this archetype enact it as subject.
    pub attributes: Vec<u8>,
    /// Relationship ids this archetype can receive as object.
    pub receivable: Vec<usize>,
    pub embedding: Vec<f64>,
}

impl Archetype {
    pub fn is_affordance(&self) -> bool {
        self.attributes.contains(&1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub relationships: Vec<String>,
    pub archetypes: Vec<Archetype>,
}

impl Taxonomy {
    pub fn num_relations(&self) -> usize {
        self.relationships.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.archetypes.first().map_or(0, |a| a.embedding.len())
    }

    pub fn archetype(&self, name: &str) -> Option<&Archetype> {
        self.archetypes.iter().find(|a| a.name == name)
    }

    /// Relationship ids `subject` can enact on `object`, ascending.
    pub fn compatible(&self, subject: &Archetype, object: &Archetype) -> Vec<usize> {
        (1..=self.num_relations())
            .filter(|&r| subject.attributes[r - 1] == 1 && object.receivable.contains(&r))
            .collect()
    }

    /// Relationship id → names of archetypes that can receive it.
    pub fn compatibility_table(&self) -> BTreeMap<usize, Vec<String>> {
        (1..=self.num_relations())
            .map(|r| {
                let names = self
                    .archetypes
                    .iter()
                    .filter(|a| a.receivable.contains(&r))
                    .map(|a| a.name.clone())
                    .collect();
                (r, names)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.num_relations();
        if r == 0 {
            return Err(Error::Data("taxonomy has no relationships".into()));
        }
        let mut names = std::collections::HashSet::new();
        for n in &self.relationships {
            if !names.insert(n.as_str()) {
                return Err(Error::Data(format!("duplicate relationship name {n}")));
            }
        }
        let dim = self.embedding_dim();
        if dim == 0 {
            return Err(Error::Data("taxonomy needs archetypes with embeddings".into()));
        }
        let mut names = std::collections::HashSet::new();
        for a in &self.archetypes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Data(format!("duplicate archetype {}", a.name)));
            }
            if a.attributes.len() != r || a.attributes.iter().any(|&v| v > 1) {
                return Err(Error::Data(format!("archetype {} needs {r} 0/1 attributes", a.name)));
            }
            if a.receivable.iter().any(|&id| id == 0 || id > r) {
                return Err(Error::Data(format!("archetype {} receives an unknown relationship", a.name)));
            }
            if a.embedding.len() != dim || a.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("archetype {} has a bad embedding", a.name)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("taxonomy serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// The 13 kitchen tools plus six non-affordance foods, with seeded
/// unit-norm embeddings of dimension `input_dim`.
pub fn default_taxonomy(seed: u64, input_dim: usize) -> Taxonomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = DEFAULT_RELATIONSHIPS.len();
    let mut embed = || {
        let v: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let receivable = |name: &str| -> Vec<usize> {
        RECEIVERS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, ids)| ids.to_vec())
            .unwrap_or_default()
    };
    let mut archetypes = Vec::new();
    for (name, attrs) in TOOL_ATTRIBUTES {
        let mut flags = vec![0u8; r];
        for &a in attrs {
            flags[a - 1] = 1;
        }
        archetypes.push(Archetype {
            name: name.to_string(),
            attributes: flags,
            receivable: receivable(name),
            embedding: embed(),
        });
    }
    for name in FOOD_NAMES {
        archetypes.push(Archetype {
            name: name.to_string(),
            attributes: vec![0; r],
            receivable: FOOD_RECEIVES.to_vec(),
            embedding: embed(),
        });
    }
    Taxonomy {
        relationships: DEFAULT_RELATIONSHIPS.iter().map(|s| s.to_string()).collect(),
        archetypes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_embeddings() {
        assert_eq!(default_taxonomy(5, 16), default_taxonomy(5, 16));
        assert_ne!(default_taxonomy(5, 16), default_taxonomy(6, 16));
        let t = default_taxonomy(5, 16);
        assert_eq!(t.hash(), default_taxonomy(5, 16).hash());
        for a in &t.archetypes {
            let n: f64 = a.embedding.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        t.validate().unwrap();
    }

    #[test]
    fn tool_names_and_attribute_examples() {
        let t = default_taxonomy(0, 8);
        for name in TOOL_NAMES {
            assert!(t.archetype(name).is_some(), "{name}");
        }
        let bowl = t.archetype("bowl").unwrap();
        assert_eq!(bowl.attributes, vec![0, 1, 0, 1, 0, 0]);
        assert_eq!(t.archetype("spoon").unwrap().attributes, vec![1, 0, 0, 0, 0, 0]);
        assert_eq!(t.archetype("knife").unwrap().attributes, vec![0, 0, 1, 0, 0, 0]);
        assert_eq!(t.archetype("cloth").unwrap().attributes, vec![0, 0, 0, 0, 1, 0]);
        assert_eq!(t.archetype("can").unwrap().attributes[5], 1);
        let apple = t.archetype("apple").unwrap();
        assert!(!apple.is_affordance());
        assert_eq!(t.compatible(t.archetype("knife").unwrap(), apple), vec![3]);
        assert!(t.compatible(apple, t.archetype("knife").unwrap()).is_empty());
        assert!(t.compatibility_table()[&3].contains(&"apple".to_string()));
    }

    #[test]
    fn validation_catches_bad_taxonomies() {
        let mut t = default_taxonomy(0, 4);
        t.archetypes[0].attributes.push(0);
        assert!(t.validate().is_err());
        let mut t = default_taxonomy(0, 4);
        t.archetypes[1].name = t.archetypes[0].name.clone();
        assert!(t.validate().is_err());
        let mut t = default_taxonomy(0, 4);
        t.archetypes[0].receivable.push(9);
        assert!(t.validate().is_err());
    }
}
