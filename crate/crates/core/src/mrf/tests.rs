use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent brute force: recursive enumeration of every labeling.
fn brute_force_min(p: &MrfProblem) -> f64 {
    fn rec(p: &MrfProblem, node: usize, labels: &mut Vec<u32>, best: &mut f64) {
        if node == p.node_count() {
            let mut e: f64 = labels.iter().enumerate().map(|(i, &l)| p.unary(i, l).unwrap()).sum();
            for &(i, j) in p.edges() {
                if labels[i as usize] != labels[j as usize] {
                    e += p.lambda();
                }
            }
            *best = best.min(e);
            return;
        }
        for &(l, _) in p.candidates(node) {
            labels.push(l);
            rec(p, node + 1, labels, best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(p, 0, &mut Vec::new(), &mut best);
    best
}

fn random_problem(seed: u64) -> MrfProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=10);
    let labels = rng.random_range(1..=4u32);
    let lambda = rng.random_range(0.0..5.0);
    let mut p = MrfProblem::new(lambda).unwrap();
    for _ in 0..n {
        let mut cands: Vec<(u32, f64)> = Vec::new();
        for l in 0..labels {
            if rng.random_bool(0.8) {
                cands.push((l, rng.random_range(0.0..10.0)));
            }
        }
        if cands.is_empty() {
            cands.push((rng.random_range(0..labels), rng.random_range(0.0..10.0)));
        }
        p.add_node(cands).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.35) {
                p.add_edge(i, j).unwrap();
            }
        }
    }
    p
}

#[test]
fn zero_lambda_is_per_node_argmin() {
    let p = MrfProblem::from_parts(
        vec![vec![(0, 3.0), (1, 1.0), (2, 1.0)], vec![(0, -2.0), (5, 4.0)]],
        vec![(0, 1)],
        0.0,
    )
    .unwrap();
    let s = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(s.labels, vec![1, 0]);
    assert_eq!(s.energy, -1.0);
}

#[test]
fn two_node_chain_agrees() {
    let p = MrfProblem::from_parts(vec![vec![(0, 0.0), (1, 10.0)], vec![(0, 10.0), (1, 0.0)]], vec![(0, 1)], 100.0).unwrap();
    let s = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(s.labels[0], s.labels[1]);
    assert_eq!(s.energy, 10.0);
    assert_eq!(s.labels, vec![0, 0]);
    let ex = solve_exhaustive(&p).unwrap();
    assert_eq!(ex.energy, 10.0);
    assert_eq!(ex.labels, vec![0, 0]);
}

#[test]
fn random_problems_against_enumeration() {
    let mut exact = 0;
    for seed in 0..100 {
        let p = random_problem(seed);
        let opt = brute_force_min(&p);
        let s = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.energy, p.energy(&s.labels).unwrap());
        assert!(s.energy <= s.initial_energy);
        assert!(s.energy <= 2.0 * opt + 1e-9, "seed {seed}: {} vs {opt}", s.energy);
        let mut prev = s.initial_energy;
        for &e in &s.sweep_energies {
            assert!(e <= prev);
            prev = e;
        }
        if (s.energy - opt).abs() <= 1e-9 {
            exact += 1;
        }
        assert!((solve_exhaustive(&p).unwrap().energy - opt).abs() <= 1e-9);
    }
    assert!(exact >= 95, "exact optimum in {exact} of 100");
}

#[test]
fn constant_shift_moves_energy_by_the_constant() {
    for seed in 0..30 {
        let p = random_problem(1000 + seed);
        let mut nodes: Vec<Vec<(u32, f64)>> = (0..p.node_count()).map(|i| p.candidates(i).to_vec()).collect();
        for c in nodes[0].iter_mut() {
            c.1 += 7.25;
        }
        let q = MrfProblem::from_parts(nodes, p.edges().to_vec(), p.lambda()).unwrap();
        let a = solve_exhaustive(&p).unwrap();
        let b = solve_exhaustive(&q).unwrap();
        assert!((b.energy - a.energy - 7.25).abs() < 1e-9);
        assert_eq!(a.labels, b.labels);
    }
}

#[test]
fn relabeling_preserves_optimal_energy() {
    let perm = [3u32, 0, 2, 1];
    for seed in 0..30 {
        let p = random_problem(2000 + seed);
        let nodes = (0..p.node_count())
            .map(|i| p.candidates(i).iter().map(|&(l, c)| (perm[l as usize], c)).collect())
            .collect();
        let q = MrfProblem::from_parts(nodes, p.edges().to_vec(), p.lambda()).unwrap();
        let a = solve_exhaustive(&p).unwrap();
        let mapped: Vec<u32> = a.labels.iter().map(|&l| perm[l as usize]).collect();
        assert!((q.energy(&mapped).unwrap() - a.energy).abs() < 1e-12);
        assert!((solve_exhaustive(&q).unwrap().energy - a.energy).abs() < 1e-9);
    }
}

#[test]
fn empty_candidates_are_reported() {
    let p = MrfProblem::from_parts(vec![vec![(0, 1.0)], vec![]], vec![(0, 1)], 1.0).unwrap();
    assert_eq!(solve(&p, &SolverConfig::default()).unwrap_err(), MrfError::NoCandidates(1));
}

#[test]
fn invalid_inputs_rejected() {
    assert!(matches!(MrfProblem::new(-1.0), Err(MrfError::InvalidWeight(_))));
    let mut p = MrfProblem::new(1.0).unwrap();
    assert!(p.add_node(vec![(0, f64::NAN)]).is_err());
    assert!(p.add_node(vec![(1, 0.0), (1, 2.0)]).is_err());
    p.add_node(vec![(0, 0.0)]).unwrap();
    assert!(matches!(p.add_edge(0, 3), Err(MrfError::InvalidEdge { node: 3, .. })));
    assert!(p.energy(&[7]).is_err());
}

#[test]
fn exhaustive_size_limit() {
    let nodes = vec![vec![(0, 0.0)]; EXHAUSTIVE_MAX_NODES + 1];
    let p = MrfProblem::from_parts(nodes, vec![], 1.0).unwrap();
    assert!(matches!(solve_exhaustive(&p), Err(MrfError::TooLargeForExhaustive { .. })));
}

#[test]
fn greedy_ties_go_to_lowest_label() {
    let p = MrfProblem::from_parts(vec![vec![(4, 1.0), (2, 1.0), (9, 1.0)]], vec![], 0.0).unwrap();
    assert_eq!(p.greedy().unwrap(), vec![2]);
}

#[test]
fn text_dump_round_trips() {
    for seed in 0..10 {
        let p = random_problem(3000 + seed);
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        let q = MrfProblem::read_text(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }
    assert!(MrfProblem::read_text("mrf 2 0 1.0\nnode 0 0 1.0\n".as_bytes()).is_err());
    assert!(MrfProblem::read_text("nope\n".as_bytes()).is_err());
}

#[test]
fn long_chain_smooths_to_majority() {
    // 20k-node chain, most nodes prefer label 0, a noisy minority prefers 1
    // by less than the smoothness it would cost to break the chain
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nodes = (0..n)
        .map(|_| if rng.random_bool(0.1) { vec![(0, 0.4), (1, 0.0)] } else { vec![(0, 0.0), (1, 0.4)] })
        .collect();
    let edges = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
    let p = MrfProblem::from_parts(nodes, edges, 1.0).unwrap();
    let s = solve(&p, &SolverConfig::default()).unwrap();
    assert!(s.labels.iter().all(|&l| l == 0));
    assert!(s.energy < s.initial_energy);
}
