//! Optimal transposable N:M masks via a min-cost flow reduction.
//!
//! Each M×M tile becomes a bipartite network: source → row nodes
//! (capacity N, cost 0), coefficient edges row i → col j (capacity 1,
//! cost |W_ij|), col nodes → sink (capacity N, cost 0). A min-cost flow
//! of value N·M saturates exactly the coefficient edges to prune, so
//! every row and column of the tile loses exactly N entries and the
//! kept ℓ1 is maximal among transposable masks.

use crate::error::{Error, Result};
use crate::tensor::{iter_square_blocks, Mask, Matrix, NmConfig};
use rayon::prelude::*;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Largest supported tile side. The use cases are M ∈ {2, 4, 8}; the
/// bound keeps worst-case solver time trivially small.
pub const MAX_BLOCK_SIDE: usize = 64;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: u32,
    cost: f64,
}

/// Residual network for one M×M tile.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    m: usize,
    n: usize,
    edges: Vec<Edge>,     // forward/backward pairs, twin = id ^ 1
    adj: Vec<Vec<usize>>, // node -> edge ids, deterministic order
    coeff_base: usize,    // id of the first coefficient edge
}

impl FlowNetwork {
    fn source(&self) -> usize {
        0
    }

    fn sink(&self) -> usize {
        2 * self.m + 1
    }

    fn node_count(&self) -> usize {
        2 * self.m + 2
    }

    /// Total flow the network must carry.
    pub fn demand(&self) -> u32 {
        (self.n * self.m) as u32
    }

    pub fn coefficient_edge_count(&self) -> usize {
        self.m * self.m
    }

    fn add_edge(
        edges: &mut Vec<Edge>,
        adj: &mut [Vec<usize>],
        u: usize,
        v: usize,
        cap: u32,
        cost: f64,
    ) {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge {
            to: u,
            cap: 0,
            cost: -cost,
        });
    }
}

/// Build the tile network. `block` must be M×M with finite entries.
pub fn build_network(block: &Matrix, cfg: &NmConfig) -> Result<FlowNetwork> {
    let m = cfg.m();
    if block.rows() != m || block.cols() != m {
        return Err(Error::Dimension(format!(
            "expected {m}x{m} block, got {}x{}",
            block.rows(),
            block.cols()
        )));
    }
    if m > MAX_BLOCK_SIDE {
        return Err(Error::TooLarge(format!(
            "block side {m} exceeds supported maximum {MAX_BLOCK_SIDE}"
        )));
    }
    let n = cfg.n();
    let node_count = 2 * m + 2;
    let mut edges = Vec::with_capacity(2 * (m * m + 2 * m));
    let mut adj = vec![Vec::new(); node_count];
    let (source, sink) = (0, 2 * m + 1);

    for i in 0..m {
        FlowNetwork::add_edge(&mut edges, &mut adj, source, 1 + i, n as u32, 0.0);
    }
    let coeff_base = edges.len();
    // Coefficient edges in row-major order; solver ties resolve by this
    // lexicographic (row, col) ordering.
    for i in 0..m {
        for j in 0..m {
            FlowNetwork::add_edge(
                &mut edges,
                &mut adj,
                1 + i,
                1 + m + j,
                1,
                block.get(i, j).abs(),
            );
        }
    }
    for j in 0..m {
        FlowNetwork::add_edge(&mut edges, &mut adj, 1 + m + j, sink, n as u32, 0.0);
    }
    Ok(FlowNetwork {
        m,
        n,
        edges,
        adj,
        coeff_base,
    })
}

/// Integral min-cost flow solution for one tile.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// (row, col) positions whose coefficient edge is saturated, i.e.
    /// the entries to prune.
    pub pruned: Vec<(usize, usize)>,
    /// Total cost of the flow = pruned ℓ1 of the tile.
    pub cost: f64,
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Successive shortest augmenting paths with node potentials. All
/// original costs are nonnegative, so reduced costs stay nonnegative
/// and the inner loop is a plain Dijkstra.
pub fn solve_min_cost(net: &FlowNetwork) -> Result<FlowSolution> {
    let mut net = net.clone();
    let nodes = net.node_count();
    let (source, sink) = (net.source(), net.sink());
    let demand = net.demand();

    let mut potential = vec![0.0f64; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut pushed: u32 = 0;

    while pushed < demand {
        dist.fill(f64::INFINITY);
        parent_edge.fill(usize::MAX);
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(HeapEntry {
            dist: 0.0,
            node: source,
        }));
        while let Some(Reverse(HeapEntry { dist: d, node: u })) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &eid in &net.adj[u] {
                let e = &net.edges[eid];
                if e.cap == 0 {
                    continue;
                }
                // Floating-point drift can make a reduced cost a hair
                // negative; clamp so Dijkstra's invariant holds.
                let rc = (e.cost + potential[u] - potential[e.to]).max(0.0);
                let nd = d + rc;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    parent_edge[e.to] = eid;
                    heap.push(Reverse(HeapEntry {
                        dist: nd,
                        node: e.to,
                    }));
                }
            }
        }
        if dist[sink].is_infinite() {
            return Err(Error::Infeasible(format!(
                "only {pushed} of {demand} units routable"
            )));
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        // Coefficient edges have unit capacity, so the bottleneck is 1
        // on every augmenting path.
        let mut bottleneck = u32::MAX;
        let mut v = sink;
        while v != source {
            let eid = parent_edge[v];
            bottleneck = bottleneck.min(net.edges[eid].cap);
            v = net.edges[eid ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let eid = parent_edge[v];
            net.edges[eid].cap -= bottleneck;
            net.edges[eid ^ 1].cap += bottleneck;
            v = net.edges[eid ^ 1].to;
        }
        pushed += bottleneck;
    }

    debug_assert!(reduced_costs_nonnegative(&net, &potential));

    let m = net.m;
    let mut pruned = Vec::with_capacity(net.n * m);
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..m {
            let eid = net.coeff_base + 2 * (i * m + j);
            if net.edges[eid].cap == 0 {
                pruned.push((i, j));
                cost += net.edges[eid].cost;
            }
        }
    }
    Ok(FlowSolution { pruned, cost })
}

/// Complementary-slackness certificate: every residual edge must have
/// nonnegative reduced cost at termination.
fn reduced_costs_nonnegative(net: &FlowNetwork, potential: &[f64]) -> bool {
    let scale = net
        .edges
        .iter()
        .map(|e| e.cost.abs())
        .fold(1.0f64, f64::max);
    for (u, adj) in net.adj.iter().enumerate() {
        for &eid in adj {
            let e = &net.edges[eid];
            if e.cap > 0 && e.cost + potential[u] - potential[e.to] < -1e-9 * scale {
                return false;
            }
        }
    }
    true
}

fn tile_matrix(mat: &Matrix, row: usize, col: usize, m: usize) -> Matrix {
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        let start = (row + i) * mat.cols() + col;
        data.extend_from_slice(&mat.data()[start..start + m]);
    }
    Matrix::new(m, m, data).expect("tile of a finite matrix is finite")
}

/// Solve one tile: returns the pruned positions (tile-local).
pub fn solve_tile(block: &Matrix, cfg: &NmConfig) -> Result<FlowSolution> {
    solve_min_cost(&build_network(block, cfg)?)
}

/// Per-tile optimal transposable mask over the whole matrix. Tiles are
/// independent and solved in parallel; output is bit-identical to the
/// sequential order.
pub fn optimal_transposable_mask(mat: &Matrix, cfg: &NmConfig) -> Result<Mask> {
    let blocks = iter_square_blocks(mat, cfg)?;
    if cfg.m() > MAX_BLOCK_SIDE {
        return Err(Error::TooLarge(format!(
            "block side {} exceeds supported maximum {MAX_BLOCK_SIDE}",
            cfg.m()
        )));
    }
    let m = cfg.m();
    let solutions: Vec<FlowSolution> = blocks
        .par_iter()
        .map(|b| solve_tile(&tile_matrix(mat, b.row, b.col, m), cfg))
        .collect::<Result<_>>()?;
    let mut bits = vec![1u8; mat.rows() * mat.cols()];
    for (b, sol) in blocks.iter().zip(&solutions) {
        for &(i, j) in &sol.pruned {
            bits[(b.row + i) * mat.cols() + b.col + j] = 0;
        }
    }
    Mask::new(mat.rows(), mat.cols(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::count_violations;
    use crate::tensor::masked_l1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize, m: usize) -> NmConfig {
        NmConfig::new(n, m).unwrap()
    }

    #[test]
    fn network_shape_matches_construction() {
        let block = Matrix::new(4, 4, vec![1.0; 16]).unwrap();
        let net = build_network(&block, &cfg(2, 4)).unwrap();
        assert_eq!(net.node_count(), 10);
        assert_eq!(net.coefficient_edge_count(), 16);
        assert_eq!(net.demand(), 8);

        let block = Matrix::new(8, 8, vec![1.0; 64]).unwrap();
        let net = build_network(&block, &cfg(4, 8)).unwrap();
        assert_eq!(net.demand(), 32); // M²/2

        let block = Matrix::new(2, 2, vec![1.0; 4]).unwrap();
        let net = build_network(&block, &cfg(1, 2)).unwrap();
        assert_eq!(net.coefficient_edge_count(), 4);
        assert_eq!(net.demand(), 2);
    }

    #[test]
    fn uniform_block_costs_nm_times_value() {
        let c = cfg(2, 4);
        let block = Matrix::new(4, 4, vec![1.5; 16]).unwrap();
        let sol = solve_tile(&block, &c).unwrap();
        assert_eq!(sol.pruned.len(), 8);
        assert!((sol.cost - 8.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn preplaced_zeros_carry_the_flow() {
        // zeros on two diagonals: 2 per row and column
        let mut data = vec![5.0; 16];
        for i in 0..4 {
            data[i * 4 + i] = 0.0;
            data[i * 4 + (i + 1) % 4] = 0.0;
        }
        let block = Matrix::new(4, 4, data).unwrap();
        let sol = solve_tile(&block, &cfg(2, 4)).unwrap();
        assert_eq!(sol.cost, 0.0);
        for &(i, j) in &sol.pruned {
            assert_eq!(block.get(i, j), 0.0);
        }
    }

    #[test]
    fn flow_is_integral_and_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let block = Matrix::new(8, 8, data).unwrap();
            let c = cfg(4, 8);
            let sol = solve_tile(&block, &c).unwrap();
            assert_eq!(sol.pruned.len(), 32);
            for i in 0..8 {
                assert_eq!(sol.pruned.iter().filter(|p| p.0 == i).count(), 4);
                assert_eq!(sol.pruned.iter().filter(|p| p.1 == i).count(), 4);
            }
        }
    }

    #[test]
    fn known_4x4_optimum() {
        let block = Matrix::from_rows(&[
            vec![4.0, 3.0, 1.0, 1.0],
            vec![3.0, 4.0, 1.0, 1.0],
            vec![1.0, 1.0, 4.0, 3.0],
            vec![1.0, 1.0, 3.0, 4.0],
        ])
        .unwrap();
        let mask = optimal_transposable_mask(&block, &cfg(2, 4)).unwrap();
        assert!((masked_l1(&block, &mask).unwrap() - 28.0).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(mask.kept(i, j), block.get(i, j) >= 3.0);
            }
        }
    }

    #[test]
    fn mask_and_transpose_satisfy_nm() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let data: Vec<f64> = (0..16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Matrix::new(16, 16, data).unwrap();
        let c = cfg(4, 8);
        let mask = optimal_transposable_mask(&w, &c).unwrap();
        assert_eq!(count_violations(&mask, &c).unwrap(), (0, 0));
        assert_eq!(count_violations(&mask.transpose(), &c).unwrap(), (0, 0));
    }

    #[test]
    fn transposition_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Matrix::new(8, 8, data).unwrap();
        let c = cfg(4, 8);
        let kept_w = masked_l1(&w, &optimal_transposable_mask(&w, &c).unwrap()).unwrap();
        let wt = w.transpose();
        let kept_wt = masked_l1(&wt, &optimal_transposable_mask(&wt, &c).unwrap()).unwrap();
        assert!((kept_w - kept_wt).abs() < 1e-9 * kept_w.abs().max(1.0));
    }

    #[test]
    fn scaling_leaves_mask_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Matrix::new(8, 8, data.clone()).unwrap();
        let scaled = Matrix::new(8, 8, data.iter().map(|v| v * 3.25).collect()).unwrap();
        let c = cfg(4, 8);
        assert_eq!(
            optimal_transposable_mask(&w, &c).unwrap(),
            optimal_transposable_mask(&scaled, &c).unwrap()
        );
    }

    #[test]
    fn rejects_oversized_blocks() {
        let block = Matrix::new(128, 128, vec![1.0; 128 * 128]).unwrap();
        assert!(matches!(
            optimal_transposable_mask(&block, &cfg(64, 128)),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn rejects_nondivisible_shapes() {
        let w = Matrix::new(8, 12, vec![1.0; 96]).unwrap();
        assert!(optimal_transposable_mask(&w, &cfg(4, 8)).is_err());
    }
}
