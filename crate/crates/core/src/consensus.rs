//! Sensor network topology, Metropolis consensus weights and synchronous
//! average-consensus rounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EotError, Result};
use crate::geometry::Point;
use crate::info_filter::{InformationState, InnovationPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Senses the object and communicates.
    Sensor,
    /// Communicates only; never receives measurements.
    Communication,
}

/// Undirected geometric graph of sensor and communication nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetwork {
    positions: Vec<Point>,
    kinds: Vec<NodeKind>,
    /// Neighbors of each node, excluding the node itself, sorted.
    neighbors: Vec<Vec<usize>>,
    comm_radius: f64,
}

impl SensorNetwork {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn comm_radius(&self) -> f64 {
        self.comm_radius
    }

    pub fn sensor_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&s| self.kinds[s] == NodeKind::Sensor).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}

/// Connects every pair of nodes at Euclidean distance `<= comm_radius`.
pub fn build_network(positions: Vec<Point>, kinds: Vec<NodeKind>, comm_radius: f64) -> Result<SensorNetwork> {
    if positions.len() < 2 {
        return Err(EotError::InvalidNetwork(format!(
            "need at least 2 nodes, got {}",
            positions.len()
        )));
    }
    if kinds.len() != positions.len() {
        return Err(EotError::InvalidNetwork(format!(
            "{} positions but {} node kinds",
            positions.len(),
            kinds.len()
        )));
    }
    if !(comm_radius > 0.0) {
        return Err(EotError::InvalidNetwork(format!("communication radius {comm_radius}")));
    }
    let n = positions.len();
    let mut neighbors = vec![Vec::new(); n];
    for s in 0..n {
        for j in (s + 1)..n {
            if (positions[s] - positions[j]).norm() <= comm_radius {
                neighbors[s].push(j);
                neighbors[j].push(s);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let net = SensorNetwork {
        positions,
        kinds,
        neighbors,
        comm_radius,
    };
    match net.component_count() {
        1 => Ok(net),
        components => Err(EotError::DisconnectedNetwork { components }),
    }
}

/// Fully connected network of `n` nodes on a unit circle.
pub fn complete_network(kinds: Vec<NodeKind>) -> Result<SensorNetwork> {
    let n = kinds.len();
    let positions = (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            Point::new(a.cos(), a.sin())
        })
        .collect();
    build_network(positions, kinds, 2.5)
}

/// Consensus weights `π^{s,j}` with the neighbor lists they are supported on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    pi: DMatrix<f64>,
    /// Support of each row, including the diagonal.
    support: Vec<Vec<usize>>,
}

impl ConsensusMatrix {
    pub fn from_dense(pi: DMatrix<f64>) -> Result<Self> {
        if !pi.is_square() {
            return Err(EotError::InvalidNetwork("consensus matrix is not square".into()));
        }
        if pi.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(EotError::InvalidNetwork("consensus weights must be finite and nonnegative".into()));
        }
        let n = pi.nrows();
        let support = (0..n)
            .map(|s| (0..n).filter(|&j| j == s || pi[(s, j)] != 0.0).collect())
            .collect();
        Ok(Self { pi, support })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.nrows() == 0
    }

    pub fn weight(&self, s: usize, j: usize) -> f64 {
        self.pi[(s, j)]
    }

    /// Rows and columns sum to one within `tol` and all weights are nonnegative.
    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        is_doubly_stochastic(&self.pi, tol)
    }

    /// `Πᴸ`.
    pub fn power(&self, l: u32) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::identity(n, n);
        for _ in 0..l {
            out = &out * &self.pi;
        }
        out
    }
}

pub fn is_doubly_stochastic(pi: &DMatrix<f64>, tol: f64) -> bool {
    pi.is_square()
        && pi.iter().all(|&w| w >= 0.0)
        && pi.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
        && pi.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol)
}

/// `π^{s,j} = 1/(1 + max(deg s, deg j))` on edges, diagonal fills each row to 1.
pub fn metropolis_weights(net: &SensorNetwork) -> ConsensusMatrix {
    let n = net.len();
    let mut pi = DMatrix::zeros(n, n);
    for s in 0..n {
        let mut off = 0.0;
        for &j in net.neighbors(s) {
            let w = 1.0 / (1.0 + net.degree(s).max(net.degree(j)) as f64);
            pi[(s, j)] = w;
            off += w;
        }
        pi[(s, s)] = 1.0 - off;
    }
    let support = (0..n)
        .map(|s| {
            let mut row: Vec<usize> = net.neighbors(s).to_vec();
            row.push(s);
            row.sort_unstable();
            row
        })
        .collect();
    ConsensusMatrix { pi, support }
}

/// True iff some power of `pi` up to the Wielandt bound `n² − 2n + 2` is
/// entrywise positive. Only the sign pattern matters, so the check runs on
/// boolean matrices; positivity at the bound is equivalent because powers of
/// a primitive matrix stay positive.
pub fn check_primitive(pi: &DMatrix<f64>) -> bool {
    if !pi.is_square() || pi.nrows() == 0 || pi.iter().any(|&w| w < 0.0) {
        return false;
    }
    let n = pi.nrows();
    let pattern: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| pi[(i, j)] > 0.0).collect()).collect();
    let bound = n * n - 2 * n + 2;
    let mul = |a: &Vec<Vec<bool>>, b: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect())
            .collect()
    };
    let mut result: Option<Vec<Vec<bool>>> = None;
    let mut base = pattern;
    let mut e = bound;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => mul(&r, &base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = mul(&base, &base);
        }
    }
    result.is_some_and(|r| r.iter().all(|row| row.iter().all(|&b| b)))
}

/// Values that can be mixed by a consensus round.
pub trait ConsensusValue: Clone {
    fn zeroed(&self) -> Self;
    fn add_scaled(&mut self, weight: f64, other: &Self);
    fn shape(&self) -> Vec<usize>;
}

impl ConsensusValue for f64 {
    fn zeroed(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        *self += weight * other;
    }
    fn shape(&self) -> Vec<usize> {
        Vec::new()
    }
}

impl ConsensusValue for DVector<f64> {
    fn zeroed(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        self.axpy(weight, other, 1.0);
    }
    fn shape(&self) -> Vec<usize> {
        vec![self.len()]
    }
}

impl ConsensusValue for DMatrix<f64> {
    fn zeroed(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        *self += other * weight;
    }
    fn shape(&self) -> Vec<usize> {
        vec![self.nrows(), self.ncols()]
    }
}

impl ConsensusValue for InformationState {
    fn zeroed(&self) -> Self {
        InformationState {
            q: self.q.zeroed(),
            omega: self.omega.zeroed(),
        }
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        self.q.add_scaled(weight, &other.q);
        self.omega.add_scaled(weight, &other.omega);
    }
    fn shape(&self) -> Vec<usize> {
        ConsensusValue::shape(&self.omega)
    }
}

impl ConsensusValue for InnovationPair {
    fn zeroed(&self) -> Self {
        InnovationPair::zeros(self.dim())
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        self.dq.add_scaled(weight, &other.dq);
        self.d_omega.add_scaled(weight, &other.d_omega);
    }
    fn shape(&self) -> Vec<usize> {
        ConsensusValue::shape(&self.d_omega)
    }
}

impl<A: ConsensusValue, B: ConsensusValue> ConsensusValue for (A, B) {
    fn zeroed(&self) -> Self {
        (self.0.zeroed(), self.1.zeroed())
    }
    fn add_scaled(&mut self, weight: f64, other: &Self) {
        self.0.add_scaled(weight, &other.0);
        self.1.add_scaled(weight, &other.1);
    }
    fn shape(&self) -> Vec<usize> {
        let mut s = self.0.shape();
        s.push(usize::MAX);
        s.extend(self.1.shape());
        s
    }
}

/// Runs `rounds` synchronous rounds `x_s(l) = Σ_j π^{s,j}·x_j(l−1)`.
///
/// Every node reads its neighbors' values from the previous round and the new
/// values are written to a separate buffer.
pub fn consensus_rounds<T: ConsensusValue>(values: &[T], pi: &ConsensusMatrix, rounds: usize) -> Result<Vec<T>> {
    if values.len() != pi.len() {
        return Err(EotError::DimensionMismatch {
            context: "consensus_rounds",
            expected: format!("{} node values", pi.len()),
            actual: values.len().to_string(),
        });
    }
    if let Some(first) = values.first() {
        let shape = first.shape();
        if let Some(bad) = values.iter().position(|v| v.shape() != shape) {
            return Err(EotError::DimensionMismatch {
                context: "consensus_rounds",
                expected: format!("{shape:?}"),
                actual: format!("{:?} at node {bad}", values[bad].shape()),
            });
        }
    }
    let mut current = values.to_vec();
    for _ in 0..rounds {
        let next: Vec<T> = (0..current.len())
            .map(|s| {
                let mut acc = current[s].zeroed();
                for &j in &pi.support[s] {
                    acc.add_scaled(pi.pi[(s, j)], &current[j]);
                }
                acc
            })
            .collect();
        current = next;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(n: usize) -> SensorNetwork {
        let positions = (0..n).map(|i| Point::new(i as f64 * 1000.0, 0.0)).collect();
        build_network(positions, vec![NodeKind::Sensor; n], 1500.0).unwrap()
    }

    #[test]
    fn pair_connectivity() {
        let kinds = vec![NodeKind::Sensor, NodeKind::Communication];
        let ok = build_network(vec![Point::new(0.0, 0.0), Point::new(1000.0, 0.0)], kinds.clone(), 2000.0).unwrap();
        assert_eq!(ok.edge_count(), 1);
        let err = build_network(vec![Point::new(0.0, 0.0), Point::new(3000.0, 0.0)], kinds, 2000.0);
        assert!(matches!(err, Err(EotError::DisconnectedNetwork { components: 2 })));
    }

    #[test]
    fn too_few_nodes() {
        assert!(build_network(vec![Point::zeros()], vec![NodeKind::Sensor], 1.0).is_err());
    }

    #[test]
    fn metropolis_on_path() {
        let pi = metropolis_weights(&line(3));
        let m = pi.matrix();
        assert_relative_eq!(m[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
        assert!(pi.is_doubly_stochastic(1e-12));
        assert!(check_primitive(m));
    }

    #[test]
    fn metropolis_on_triangle_is_uniform() {
        let net = complete_network(vec![NodeKind::Sensor; 3]).unwrap();
        let pi = metropolis_weights(&net);
        for w in pi.matrix().iter() {
            assert_relative_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(check_primitive(pi.matrix()));
        let out = consensus_rounds(&[3.0, 6.0, 9.0], &pi, 1).unwrap();
        for v in out {
            assert_relative_eq!(v, 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn periodic_matrix_is_not_primitive() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(!check_primitive(&swap));
        assert!(!check_primitive(&DMatrix::identity(3, 3)));
    }

    #[test]
    fn zero_rounds_is_identity() {
        let pi = metropolis_weights(&line(4));
        let vals = vec![1.0, -2.0, 5.0, 0.5];
        assert_eq!(consensus_rounds(&vals, &pi, 0).unwrap(), vals);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let pi = metropolis_weights(&line(2));
        let vals = vec![DVector::zeros(2), DVector::zeros(3)];
        assert!(consensus_rounds(&vals, &pi, 1).is_err());
        assert!(consensus_rounds(&[1.0], &pi, 1).is_err());
    }

    #[test]
    fn pairs_are_mixed_jointly() {
        let pi = metropolis_weights(&complete_network(vec![NodeKind::Sensor; 2]).unwrap());
        let vals = vec![
            (DVector::from_element(1, 2.0), DMatrix::from_element(1, 1, 4.0)),
            (DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 0.0)),
        ];
        let out = consensus_rounds(&vals, &pi, 1).unwrap();
        assert_relative_eq!(out[1].0[0], 1.0);
        assert_relative_eq!(out[1].1[(0, 0)], 2.0);
    }

    proptest! {
        #[test]
        fn rounds_conserve_sum_and_shrink_spread(
            vals in proptest::collection::vec(-100.0f64..100.0, 6),
            rounds in 0usize..20,
        ) {
            let pi = metropolis_weights(&line(6));
            let total: f64 = vals.iter().sum();
            let mut current = vals.clone();
            let mut spread = current.iter().cloned().fold(f64::MIN, f64::max) - current.iter().cloned().fold(f64::MAX, f64::min);
            for _ in 0..rounds {
                current = consensus_rounds(&current, &pi, 1).unwrap();
                let s: f64 = current.iter().sum();
                prop_assert!((s - total).abs() <= 1e-10 * total.abs().max(1.0));
                let new_spread = current.iter().cloned().fold(f64::MIN, f64::max) - current.iter().cloned().fold(f64::MAX, f64::min);
                prop_assert!(new_spread <= spread + 1e-12);
                spread = new_spread;
            }
        }
    }
}
