//! The combinatorial configuration space: parameter lattices, normalization,
//! distances, adjacency, enumeration, and Latin hypercube seeding.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// How a parameter's values are interpreted.
///
/// Categorical values carry no order; ordinal and continuous-grid values are
/// strictly increasing numbers. Continuous parameters are represented as
/// finite grids so the lattice stays enumerable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Categorical,
    OrdinalDiscrete,
    ContinuousGrid,
}

impl ParamKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ParamKind::Categorical)
    }
}

/// Admissible values of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValues {
    Labels(Vec<String>),
    Numbers(Vec<f64>),
}

impl ParamValues {
    pub fn len(&self) -> usize {
        match self {
            ParamValues::Labels(v) => v.len(),
            ParamValues::Numbers(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One tunable parameter: its name, kind, and ordered list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub values: ParamValues,
}

impl ParameterSpec {
    pub fn categorical(name: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical,
            values: ParamValues::Labels(labels),
        }
    }

    pub fn ordinal(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::OrdinalDiscrete,
            values: ParamValues::Numbers(values),
        }
    }

    pub fn continuous_grid(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::ContinuousGrid,
            values: ParamValues::Numbers(values),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// Display form of the value at `index`.
    pub fn value_label(&self, index: usize) -> String {
        match &self.values {
            ParamValues::Labels(v) => v[index].clone(),
            ParamValues::Numbers(v) => format_number(v[index]),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSpace(format!(
                "parameter '{}' has an empty value list",
                self.name
            )));
        }
        match (&self.values, self.kind) {
            (ParamValues::Numbers(v), ParamKind::OrdinalDiscrete | ParamKind::ContinuousGrid) => {
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpace(format!(
                        "parameter '{}' values must be strictly increasing",
                        self.name
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpace(format!(
                        "parameter '{}' has non-finite values",
                        self.name
                    )));
                }
            }
            (ParamValues::Labels(_), ParamKind::Categorical) => {}
            (ParamValues::Labels(_), _) => {
                return Err(Error::InvalidSpace(format!(
                    "parameter '{}' is numeric but lists string values",
                    self.name
                )));
            }
            (ParamValues::Numbers(_), ParamKind::Categorical) => {
                return Err(Error::InvalidSpace(format!(
                    "parameter '{}' is categorical but lists numeric values; use string labels",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn format_number(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// One point of the lattice: one value index per parameter, in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(pub Vec<usize>);

impl Configuration {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Coordinates of a configuration mapped onto the unit cube, one coordinate
/// per parameter. Value index position maps linearly onto [0,1]; a
/// single-valued parameter maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPoint {
    pub coords: Vec<f64>,
}

/// The full parameter lattice `P1 x ... x Pn`, minus any explicitly excluded
/// assignments. All operations are pure; the space is immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    params: Vec<ParameterSpec>,
    excluded: BTreeSet<Configuration>,
}

impl ConfigSpace {
    /// Validates and builds a space. Pruned spaces are expressed as explicit
    /// exclusion lists of full assignments.
    pub fn new(params: Vec<ParameterSpec>, excluded: Vec<Configuration>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidSpace("space has no parameters".into()));
        }
        for p in &params {
            p.validate()?;
        }
        let mut names = BTreeSet::new();
        for p in &params {
            if !names.insert(p.name.as_str()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate parameter name '{}'",
                    p.name
                )));
            }
        }
        let mut set = BTreeSet::new();
        for e in excluded {
            if e.0.len() != params.len() || e.0.iter().zip(&params).any(|(&i, p)| i >= p.cardinality()) {
                return Err(Error::InvalidSpace(format!(
                    "excluded assignment {e} does not address a valid lattice point"
                )));
            }
            set.insert(e);
        }
        let space = Self {
            params,
            excluded: set,
        };
        if space.cardinality() == 0 {
            return Err(Error::InvalidSpace(
                "every lattice point is excluded; |C| must be >= 1".into(),
            ));
        }
        Ok(space)
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Axis index of a parameter name.
    pub fn axis_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Cardinality of the raw product lattice, before exclusions.
    pub fn lattice_cardinality(&self) -> usize {
        self.params.iter().map(ParameterSpec::cardinality).product()
    }

    /// |C|: lattice cardinality minus excluded assignments.
    pub fn cardinality(&self) -> usize {
        self.lattice_cardinality() - self.excluded.len()
    }

    pub fn is_excluded(&self, config: &Configuration) -> bool {
        self.excluded.contains(config)
    }

    /// True when the assignment addresses a valid, non-excluded lattice point.
    pub fn contains(&self, config: &Configuration) -> bool {
        config.0.len() == self.params.len()
            && config
                .0
                .iter()
                .zip(&self.params)
                .all(|(&i, p)| i < p.cardinality())
            && !self.is_excluded(config)
    }

    fn assert_member(&self, config: &Configuration) {
        debug_assert!(
            self.contains(config),
            "configuration {config} is not a member of the space"
        );
    }

    /// Maps a configuration onto the unit cube.
    pub fn normalize(&self, config: &Configuration) -> NormalizedPoint {
        self.assert_member(config);
        let coords = config
            .0
            .iter()
            .zip(&self.params)
            .map(|(&i, p)| axis_coord(i, p.cardinality()))
            .collect();
        NormalizedPoint { coords }
    }

    /// Euclidean distance over per-axis deltas: numeric axes use the
    /// normalized difference, categorical axes the discrete 0/1 metric.
    pub fn distance(&self, a: &Configuration, b: &Configuration) -> f64 {
        self.assert_member(a);
        self.assert_member(b);
        let mut sum = 0.0;
        for axis in 0..self.params.len() {
            let d = self.axis_delta(axis, a.0[axis], b.0[axis]);
            sum += d * d;
        }
        sum.sqrt()
    }

    /// Per-axis delta used by `distance` and gradient estimation; always >= 0.
    pub fn axis_delta(&self, axis: usize, ia: usize, ib: usize) -> f64 {
        let p = &self.params[axis];
        if p.kind.is_numeric() {
            (axis_coord(ia, p.cardinality()) - axis_coord(ib, p.cardinality())).abs()
        } else if ia == ib {
            0.0
        } else {
            1.0
        }
    }

    /// All configurations adjacent to `config`: ordinal/continuous axes step
    /// one index up or down, categorical axes swap to every other category.
    /// Excluded lattice points are not reported.
    pub fn neighbors(&self, config: &Configuration) -> Vec<Configuration> {
        self.assert_member(config);
        let mut out = Vec::new();
        for (axis, p) in self.params.iter().enumerate() {
            let idx = config.0[axis];
            if p.kind.is_numeric() {
                if idx > 0 {
                    self.push_if_member(&mut out, config, axis, idx - 1);
                }
                if idx + 1 < p.cardinality() {
                    self.push_if_member(&mut out, config, axis, idx + 1);
                }
            } else {
                for other in 0..p.cardinality() {
                    if other != idx {
                        self.push_if_member(&mut out, config, axis, other);
                    }
                }
            }
        }
        out
    }

    fn push_if_member(
        &self,
        out: &mut Vec<Configuration>,
        config: &Configuration,
        axis: usize,
        new_idx: usize,
    ) {
        let mut c = config.clone();
        c.0[axis] = new_idx;
        if !self.is_excluded(&c) {
            out.push(c);
        }
    }

    /// Sibling of `config` with one axis replaced, if it is a member.
    pub fn with_axis(&self, config: &Configuration, axis: usize, new_idx: usize) -> Option<Configuration> {
        if new_idx >= self.params[axis].cardinality() {
            return None;
        }
        let mut c = config.clone();
        c.0[axis] = new_idx;
        if self.contains(&c) {
            Some(c)
        } else {
            None
        }
    }

    /// Deterministic iterator over the whole space in lexicographic index
    /// order, skipping exclusions. Yields each configuration exactly once.
    pub fn enumerate(&self) -> SpaceIter<'_> {
        SpaceIter {
            space: self,
            next: Some(Configuration(vec![0; self.params.len()])),
        }
    }

    /// Latin hypercube seeding snapped onto the lattice.
    ///
    /// Numeric axes get one sample per stratum of an n-way partition of
    /// [0,1] before snapping to the nearest grid position; categorical axes
    /// are dealt balanced counts. Duplicates after snapping (and excluded
    /// points) are dropped, so fewer than `n_init` configurations may return.
    pub fn lhs_sample(&self, n_init: usize, seed: u64) -> Vec<Configuration> {
        let capacity = self.cardinality();
        let n = if n_init > capacity {
            log::warn!("lhs_sample: n_init {n_init} exceeds |C| = {capacity}; clamping");
            capacity
        } else {
            n_init.max(1)
        };
        let mut rng = rng::stream(seed, "lhs", &[]);
        let columns: Vec<Vec<usize>> = self
            .params
            .iter()
            .map(|p| {
                let m = p.cardinality();
                if p.kind.is_numeric() {
                    let unit = lhs_unit(n, 1, &mut rng).pop().unwrap();
                    unit.into_iter().map(|x| snap(x, m)).collect()
                } else {
                    // balanced deal: every category appears floor(n/m) or
                    // ceil(n/m) times, in shuffled order
                    let mut col: Vec<usize> = (0..n).map(|i| i % m).collect();
                    col.shuffle(&mut rng);
                    col
                }
            })
            .collect();

        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for row in 0..n {
            let c = Configuration(columns.iter().map(|col| col[row]).collect());
            if !self.is_excluded(&c) && seen.insert(c.clone()) {
                out.push(c);
            }
        }
        out
    }
}

/// Normalized coordinate of index `i` on an axis with `m` values.
fn axis_coord(i: usize, m: usize) -> f64 {
    if m <= 1 {
        0.0
    } else {
        i as f64 / (m - 1) as f64
    }
}

/// Nearest grid position for a unit-cube coordinate.
fn snap(x: f64, m: usize) -> usize {
    if m <= 1 {
        return 0;
    }
    let idx = (x * (m - 1) as f64).round() as isize;
    idx.clamp(0, m as isize - 1) as usize
}

/// Stratified unit-cube sample: one column per axis, each column holding one
/// point per stratum of an n-way partition, in shuffled stratum order.
/// Categorical axes reuse the same columns as balanced category deals.
pub(crate) fn lhs_unit(n: usize, axes: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(axes);
    for _ in 0..axes {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let col: Vec<f64> = strata
            .into_iter()
            .map(|k| (k as f64 + rng.random::<f64>()) / n as f64)
            .collect();
        cols.push(col);
    }
    cols
}

/// Lexicographic iterator over all non-excluded configurations.
pub struct SpaceIter<'a> {
    space: &'a ConfigSpace,
    next: Option<Configuration>,
}

impl Iterator for SpaceIter<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        loop {
            let current = self.next.take()?;
            self.next = advance(self.space, &current);
            if !self.space.is_excluded(&current) {
                return Some(current);
            }
        }
    }
}

fn advance(space: &ConfigSpace, current: &Configuration) -> Option<Configuration> {
    let mut indices = current.0.clone();
    for axis in (0..indices.len()).rev() {
        indices[axis] += 1;
        if indices[axis] < space.params[axis].cardinality() {
            return Some(Configuration(indices));
        }
        indices[axis] = 0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rag_params() -> Vec<ParameterSpec> {
        vec![
            ParameterSpec::categorical(
                "generator",
                ["llama-1b", "llama-3b", "llama-8b", "gemma-1b", "gemma-4b", "gemma-12b"]
                    .map(String::from)
                    .to_vec(),
            ),
            ParameterSpec::ordinal("retriever_k", vec![3.0, 5.0, 10.0, 20.0, 50.0]),
            ParameterSpec::ordinal("reranker_k", vec![1.0, 3.0, 5.0, 10.0]),
            ParameterSpec::categorical(
                "reranker",
                ["bge-v2", "bge-base", "ms-marco"].map(String::from).to_vec(),
            ),
        ]
    }

    fn rag_space() -> ConfigSpace {
        ConfigSpace::new(rag_params(), vec![]).unwrap()
    }

    #[test]
    fn cardinality_is_the_product_of_axis_sizes() {
        let space = rag_space();
        assert_eq!(space.cardinality(), 6 * 5 * 4 * 3);
        assert_eq!(space.cardinality(), 360);
    }

    #[test]
    fn non_increasing_ordinal_values_are_rejected() {
        let err = ConfigSpace::new(
            vec![ParameterSpec::ordinal("k", vec![3.0, 5.0, 5.0])],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn duplicate_names_and_empty_value_lists_are_rejected() {
        let err = ConfigSpace::new(
            vec![
                ParameterSpec::ordinal("k", vec![1.0, 2.0]),
                ParameterSpec::ordinal("k", vec![1.0, 2.0]),
            ],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));

        let err = ConfigSpace::new(vec![ParameterSpec::categorical("m", vec![])], vec![]).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn normalize_maps_index_position_linearly() {
        let space = ConfigSpace::new(
            vec![
                ParameterSpec::ordinal("k", vec![3.0, 5.0, 10.0, 20.0, 50.0]),
                ParameterSpec::ordinal("single", vec![7.0]),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(space.normalize(&Configuration(vec![0, 0])).coords, vec![0.0, 0.0]);
        assert_eq!(space.normalize(&Configuration(vec![4, 0])).coords, vec![1.0, 0.0]);
        assert_eq!(space.normalize(&Configuration(vec![2, 0])).coords[0], 0.5);
    }

    #[test]
    fn distance_examples() {
        let space = rag_space();
        let a = Configuration(vec![2, 1, 1, 0]);
        assert_eq!(space.distance(&a, &a), 0.0);

        // differ only in one categorical
        let b = Configuration(vec![5, 1, 1, 0]);
        assert_eq!(space.distance(&a, &b), 1.0);

        // adjacent step on the 5-value ordinal axis: 1/(5-1)
        let c = Configuration(vec![2, 2, 1, 0]);
        assert!((space.distance(&a, &c) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn neighbor_counts_match_axis_structure() {
        // ordinal sizes 5 and 4, categorical sizes 6 and 3; interior point
        let space = rag_space();
        let interior = Configuration(vec![2, 2, 1, 1]);
        let n = space.neighbors(&interior);
        assert_eq!(n.len(), 5 + 2 + 2 + 2); // 5 other categories + 2 + 2 + 2 others
        assert!(!n.contains(&interior));
        let unique: BTreeSet<_> = n.iter().collect();
        assert_eq!(unique.len(), n.len());

        // corner loses one neighbor per clipped ordinal axis
        let corner = Configuration(vec![0, 0, 0, 0]);
        assert_eq!(space.neighbors(&corner).len(), 5 + 1 + 1 + 2);
    }

    #[test]
    fn single_valued_axis_contributes_no_neighbors() {
        let space = ConfigSpace::new(
            vec![
                ParameterSpec::ordinal("a", vec![1.0, 2.0]),
                ParameterSpec::ordinal("b", vec![9.0]),
            ],
            vec![],
        )
        .unwrap();
        let n = space.neighbors(&Configuration(vec![0, 0]));
        assert_eq!(n, vec![Configuration(vec![1, 0])]);
    }

    #[test]
    fn enumerate_is_lexicographic_and_complete() {
        let space = ConfigSpace::new(
            vec![
                ParameterSpec::ordinal("a", vec![1.0, 2.0]),
                ParameterSpec::ordinal("b", vec![1.0, 2.0, 3.0]),
            ],
            vec![],
        )
        .unwrap();
        let all: Vec<_> = space.enumerate().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], Configuration(vec![0, 0]));
        assert_eq!(all[1], Configuration(vec![0, 1]));
        assert_eq!(all[5], Configuration(vec![1, 2]));
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
    }

    #[test]
    fn enumerate_respects_exclusions_for_the_detection_lattice() {
        // 3 x 4 x 7 x 5 = 420 minus 35 exclusions = 385
        let params = vec![
            ParameterSpec::categorical("detector", ["n", "s", "m"].map(String::from).to_vec()),
            ParameterSpec::categorical("verifier", ["none", "m", "l", "x"].map(String::from).to_vec()),
            ParameterSpec::continuous_grid(
                "conf",
                vec![0.1, 0.1667, 0.2333, 0.3, 0.3667, 0.4333, 0.5],
            ),
            ParameterSpec::continuous_grid("nms", vec![0.3, 0.4, 0.5, 0.6, 0.7]),
        ];
        let excluded: Vec<Configuration> = (0..7)
            .flat_map(|c| (0..5).map(move |n| Configuration(vec![0, 0, c, n])))
            .collect();
        assert_eq!(excluded.len(), 35);
        let space = ConfigSpace::new(params, excluded).unwrap();
        assert_eq!(space.cardinality(), 385);
        assert_eq!(space.enumerate().count(), 385);
        assert!(space.enumerate().all(|c| c.0[0] != 0 || c.0[1] != 0));
    }

    #[test]
    fn lhs_unit_columns_are_stratified() {
        // n_init = 5: each axis must land exactly one sample per quintile
        let mut rng = rng::stream(3, "lhs", &[]);
        let cols = lhs_unit(5, 2, &mut rng);
        for col in cols {
            let mut hits = [0usize; 5];
            for x in col {
                assert!((0.0..1.0).contains(&x));
                hits[(x * 5.0) as usize] += 1;
            }
            assert_eq!(hits, [1, 1, 1, 1, 1]);
        }
    }

    #[test]
    fn lhs_sample_is_reproducible_and_in_space() {
        let space = rag_space();
        let a = space.lhs_sample(24, 42);
        let b = space.lhs_sample(24, 42);
        assert_eq!(a, b);
        assert!(a.iter().all(|c| space.contains(c)));
        let unique: BTreeSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }

    #[test]
    fn lhs_sample_clamps_to_cardinality() {
        let space = ConfigSpace::new(
            vec![
                ParameterSpec::ordinal("a", vec![1.0, 2.0]),
                ParameterSpec::ordinal("b", vec![1.0, 2.0]),
            ],
            vec![],
        )
        .unwrap();
        let got = space.lhs_sample(100, 9);
        assert!(got.len() <= 4);
    }

    fn arb_config(sizes: &'static [usize]) -> impl Strategy<Value = Configuration> {
        let parts: Vec<_> = sizes.iter().map(|&m| 0..m).collect();
        parts.prop_map(Configuration)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            a in arb_config(&[6, 5, 4, 3]),
            b in arb_config(&[6, 5, 4, 3]),
            c in arb_config(&[6, 5, 4, 3]),
        ) {
            let space = rag_space();
            let dab = space.distance(&a, &b);
            let dba = space.distance(&b, &a);
            prop_assert!(dab >= 0.0);
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(space.distance(&a, &a), 0.0);
            if a != b {
                prop_assert!(dab > 0.0);
            }
            prop_assert!(space.distance(&a, &c) <= dab + space.distance(&b, &c) + 1e-12);
        }

        #[test]
        fn neighbor_relation_is_symmetric(a in arb_config(&[6, 5, 4, 3])) {
            let space = rag_space();
            for n in space.neighbors(&a) {
                prop_assert!(space.neighbors(&n).contains(&a));
            }
        }
    }
}
