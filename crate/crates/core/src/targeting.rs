//! Contract targeting sets and their decomposition into disjoint item types.
//!
//! Overlapping targeting sets `S_i` are partitioned into the minimal family
//! of disjoint types `R_j` such that every `S_i` is a union of types. Each
//! type carries the set `B_j` of contracts it can serve; dually `A_i` lists
//! the types usable by contract `i`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targeting atoms are opaque string tokens (audience tags, segment ids).
pub type Atom = String;

/// An impression contract: win `requirement` matching items by `deadline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: String,
    /// Hours from the planning origin.
    pub deadline_hours: f64,
    pub requirement: f64,
    pub targeting: Vec<Atom>,
}

impl Contract {
    pub fn new(id: impl Into<String>, deadline_hours: f64, requirement: f64, targeting: Vec<Atom>) -> Result<Self> {
        let c = Self { id: id.into(), deadline_hours, requirement, targeting };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deadline_hours > 0.0) {
            return Err(Error::Parameter(format!("contract {}: deadline must be > 0", self.id)));
        }
        if !(self.requirement >= 1.0) {
            return Err(Error::Parameter(format!("contract {}: requirement must be >= 1", self.id)));
        }
        if self.targeting.is_empty() {
            return Err(Error::Parameter(format!("contract {}: targeting set must be non-empty", self.id)));
        }
        Ok(())
    }
}

/// One disjoint item type: the atoms it contains and the contracts it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemType {
    pub atoms: Vec<Atom>,
    /// Contract indices (into the input order) whose targeting contains
    /// every atom of this type.
    pub members: Vec<usize>,
}

/// Minimal disjoint decomposition of the union of targeting sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub types: Vec<ItemType>,
    /// `A_i`: type indices per contract.
    pub contract_types: Vec<Vec<usize>>,
    /// `T^j = max_{i in B_j} T_i`: last instant a type-`j` item is useful.
    pub type_deadlines: Vec<f64>,
}

/// Partition the union of targeting sets into minimal disjoint types.
///
/// Atoms are grouped by their membership signature (the set of contracts
/// targeting them); each distinct signature becomes one type. Types are
/// ordered by `(|B_j|, B_j lexicographic)` for reproducibility.
pub fn decompose(contracts: &[Contract]) -> Result<Decomposition> {
    if contracts.is_empty() {
        return Err(Error::Parameter("decompose requires at least one contract".into()));
    }
    for c in contracts {
        c.validate()?;
    }
    let mut signature: BTreeMap<&Atom, Vec<usize>> = BTreeMap::new();
    for (i, c) in contracts.iter().enumerate() {
        for atom in &c.targeting {
            let entry = signature.entry(atom).or_default();
            if entry.last() != Some(&i) {
                entry.push(i);
            }
        }
    }
    let mut cells: BTreeMap<Vec<usize>, Vec<Atom>> = BTreeMap::new();
    for (atom, members) in signature {
        cells.entry(members).or_default().push(atom.clone());
    }
    let mut types: Vec<ItemType> = cells
        .into_iter()
        .map(|(members, mut atoms)| {
            atoms.sort();
            ItemType { atoms, members }
        })
        .collect();
    types.sort_by(|a, b| (a.members.len(), &a.members).cmp(&(b.members.len(), &b.members)));

    let mut contract_types = vec![Vec::new(); contracts.len()];
    for (j, ty) in types.iter().enumerate() {
        for &i in &ty.members {
            contract_types[i].push(j);
        }
    }
    let type_deadlines = types
        .iter()
        .map(|ty| ty.members.iter().map(|&i| contracts[i].deadline_hours).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(Decomposition { types, contract_types, type_deadlines })
}

impl Decomposition {
    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    /// Contracts still active at `t` (deadline strictly in the future).
    pub fn active_contracts(&self, contracts: &[Contract], t: f64) -> Vec<usize> {
        (0..contracts.len()).filter(|&i| t < contracts[i].deadline_hours).collect()
    }

    /// Types still useful at `t`.
    pub fn active_types(&self, t: f64) -> Vec<usize> {
        (0..self.types.len()).filter(|&j| t < self.type_deadlines[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn atoms(names: &[&str]) -> Vec<Atom> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_contract_is_one_type() {
        let contracts = vec![Contract::new("c1", 10.0, 5.0, atoms(&["a", "b"])).unwrap()];
        let d = decompose(&contracts).unwrap();
        assert_eq!(d.n_types(), 1);
        assert_eq!(d.types[0].atoms, atoms(&["a", "b"]));
        assert_eq!(d.types[0].members, vec![0]);
        assert_eq!(d.contract_types[0], vec![0]);
        assert_eq!(d.type_deadlines[0], 10.0);
    }

    #[test]
    fn venn_figure_structure() {
        // Three overlapping sets with six non-empty cells: S2 has no
        // exclusive region. Cell signatures: {1}, {3}, {1,2}, {1,3}, {2,3},
        // {1,2,3} (1-based). Expected 1-based indices after (|B|, lex)
        // ordering: A_2 = {3,5,6}, B_1 = {1}, B_6 = {1,2,3}.
        let s1 = atoms(&["a", "c", "e", "f"]);
        let s2 = atoms(&["c", "d", "f"]);
        let s3 = atoms(&["b", "d", "e", "f"]);
        let contracts = vec![
            Contract::new("c1", 10.0, 1.0, s1).unwrap(),
            Contract::new("c2", 20.0, 1.0, s2).unwrap(),
            Contract::new("c3", 30.0, 1.0, s3).unwrap(),
        ];
        let d = decompose(&contracts).unwrap();
        assert_eq!(d.n_types(), 6);
        let a2_one_based: Vec<usize> = d.contract_types[1].iter().map(|j| j + 1).collect();
        assert_eq!(a2_one_based, vec![3, 5, 6]);
        assert_eq!(d.types[0].members, vec![0]); // B_1 = {1}
        assert_eq!(d.types[5].members, vec![0, 1, 2]); // B_6 = {1,2,3}
    }

    #[test]
    fn random_collections_partition_properties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let universe: Vec<Atom> = (0..10).map(|i| format!("w{i}")).collect();
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            let contracts: Vec<Contract> = (0..n)
                .map(|i| {
                    let mut targeting: Vec<Atom> =
                        universe.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();
                    if targeting.is_empty() {
                        targeting.push(universe[rng.gen_range(0..universe.len())].clone());
                    }
                    Contract::new(format!("c{i}"), 1.0 + i as f64, 1.0, targeting).unwrap()
                })
                .collect();
            let d = decompose(&contracts).unwrap();

            // Pairwise disjoint.
            let mut seen: BTreeSet<&Atom> = BTreeSet::new();
            for ty in &d.types {
                for a in &ty.atoms {
                    assert!(seen.insert(a), "atom {a} appears in two types");
                }
            }
            // Union identity.
            let union: BTreeSet<&Atom> = contracts.iter().flat_map(|c| c.targeting.iter()).collect();
            assert_eq!(seen, union);
            // Reconstruction of each S_i from A_i and duality.
            for (i, c) in contracts.iter().enumerate() {
                let rebuilt: BTreeSet<&Atom> =
                    d.contract_types[i].iter().flat_map(|&j| d.types[j].atoms.iter()).collect();
                let original: BTreeSet<&Atom> = c.targeting.iter().collect();
                assert_eq!(rebuilt, original);
                for &j in &d.contract_types[i] {
                    assert!(d.types[j].members.contains(&i));
                }
            }
            for (j, ty) in d.types.iter().enumerate() {
                for &i in &ty.members {
                    assert!(d.contract_types[i].contains(&j));
                }
            }
            // Minimality: signatures pairwise distinct.
            for a in 0..d.types.len() {
                for b in a + 1..d.types.len() {
                    assert_ne!(d.types[a].members, d.types[b].members);
                }
            }
            // Deadline consistency.
            for (j, ty) in d.types.iter().enumerate() {
                let expect =
                    ty.members.iter().map(|&i| contracts[i].deadline_hours).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(d.type_deadlines[j], expect);
            }
        }
    }

    #[test]
    fn active_sets_examples() {
        let contracts = super::super::scenario::table_contracts();
        let d = decompose(&contracts).unwrap();
        assert_eq!(d.active_contracts(&contracts, 0.0).len(), 6);
        assert_eq!(d.active_types(0.0).len(), d.n_types());
        let max_t = contracts.iter().map(|c| c.deadline_hours).fold(0.0, f64::max);
        assert!(d.active_contracts(&contracts, max_t).is_empty());
        assert!(d.active_types(max_t).is_empty());
        // Table scenario at t = 50h: contracts 4, 5, 6 remain (1-based).
        let active: Vec<usize> = d.active_contracts(&contracts, 50.0).iter().map(|i| i + 1).collect();
        assert_eq!(active, vec![4, 5, 6]);
        // Active types shrink monotonically in t.
        let mut prev = d.active_types(0.0).len();
        for h in 1..80 {
            let cur = d.active_types(h as f64).len();
            assert!(cur <= prev);
            prev = cur;
        }
    }
}
