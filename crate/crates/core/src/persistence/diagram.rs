use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// One persistence pair; `death` is `f64::INFINITY` for essential classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub dim: usize,
    pub birth: f64,
    pub death: f64,
}

impl Feature {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureRecord {
    dim: usize,
    birth: f64,
    death: Option<f64>,
}

impl Serialize for Feature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FeatureRecord {
            dim: self.dim,
            birth: self.birth,
            death: self.death.is_finite().then_some(self.death),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Feature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FeatureRecord::deserialize(d)?;
        Ok(Self {
            dim: r.dim,
            birth: r.birth,
            death: r.death.unwrap_or(f64::INFINITY),
        })
    }
}

/// H0/H1 persistence pairs plus the filtration threshold they were computed to.
///
/// Serialises as a bare JSON array of `{dim, birth, death}` with `death: null`
/// for essential classes. The threshold is not part of the file; a diagram
/// read back takes the largest finite value it contains.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistenceDiagram {
    pub features: Vec<Feature>,
    pub threshold: f64,
}

impl PersistenceDiagram {
    pub fn in_dim(&self, dim: usize) -> impl Iterator<Item = &Feature> + '_ {
        self.features.iter().filter(move |f| f.dim == dim)
    }

    pub fn essential_count(&self, dim: usize) -> usize {
        self.in_dim(dim).filter(|f| f.is_essential()).count()
    }

    /// Lifetimes in `dim`, sorted descending.
    pub fn lifetimes(&self, dim: usize) -> Vec<f64> {
        let mut l: Vec<f64> = self.in_dim(dim).map(Feature::lifetime).collect();
        l.sort_by(|a, b| b.total_cmp(a));
        l
    }

    /// `(dim, birth, death)` triples sorted, for multiset comparisons.
    pub fn sorted_pairs(&self) -> Vec<(usize, f64, f64)> {
        let mut v: Vec<_> = self.features.iter().map(|f| (f.dim, f.birth, f.death)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        v
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.features)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let features: Vec<Feature> = serde_json::from_str(s)?;
        let threshold = features
            .iter()
            .flat_map(|f| [f.birth, f.death])
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max);
        Ok(Self { features, threshold })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_uses_null_for_infinite_death() {
        let d = PersistenceDiagram {
            features: vec![
                Feature { dim: 0, birth: 0.0, death: f64::INFINITY },
                Feature { dim: 1, birth: 0.5, death: 1.25 },
            ],
            threshold: 2.0,
        };
        let s = d.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v[0]["death"].is_null());
        assert_eq!(v[1]["death"], 1.25);
        let back = PersistenceDiagram::from_json(&s).unwrap();
        assert_eq!(back.features, d.features);
        assert_eq!(back.threshold, 1.25);
    }
}
