use super::*;
use crate::abstraction::Transition;
use alloc::string::String;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn props(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| String::from(*s)).collect()
}

fn tr(dest: usize, lo: f64, hi: f64) -> Transition {
    Transition { dest, lo, hi }
}

const A: LabelSet = LabelSet(1);
const B: LabelSet = LabelSet(2);

#[test]
fn safe_reach_examples() {
    let d = Dfa::builtin("safe_reach").unwrap();
    assert!(d.accepts(&[LabelSet::EMPTY, A]));
    assert!(!d.accepts(&[B, A]));
    assert!(!d.accepts(&[LabelSet::EMPTY]));
    assert_eq!(d.num_states(), 3);
    assert!(Dfa::builtin("nope").is_err());
}

#[test]
fn safe_reach_two_matches_trace_enumeration() {
    let d = Dfa::builtin("safe_reach_two").unwrap();
    assert_eq!(d.num_states(), 5);
    let (a, b, c) = (0, 1, 2);
    let mut checked = 0;
    for len in 0..=5u32 {
        for code in 0..8usize.pow(len) {
            let trace: Vec<LabelSet> = (0..len).map(|i| LabelSet(((code >> (3 * i)) & 7) as u32)).collect();
            let expect = trace.iter().all(|l| !l.contains(b)) && trace.iter().any(|l| l.contains(a)) && trace.iter().any(|l| l.contains(c));
            assert_eq!(d.accepts(&trace), expect, "{trace:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 1 + 8 + 64 + 512 + 4096 + 32768);
}

#[test]
fn dead_states_are_the_traps() {
    let d = Dfa::builtin("safe_reach_two").unwrap();
    assert_eq!(d.dead_states(), vec![false, false, false, false, true]);
}

#[test]
fn dfa_validation() {
    assert!(Dfa::new(props(&["a"]), 2, 0, vec![0, 1, 1, 1], &[]).is_err());
    assert!(Dfa::new(props(&["a"]), 2, 0, vec![0, 2, 1, 1], &[1]).is_err());
    assert!(Dfa::new(props(&["a"]), 2, 0, vec![0, 1, 1], &[1]).is_err());
    assert!(Dfa::new(props(&["a"]), 2, 0, vec![0, 1, 1, 1], &[1]).is_ok());
}

/// Vertices of `{lo ≤ p ≤ hi, Σp = 1}`: all coordinates but one at a bound.
fn vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    for k in 0..n {
        for mask in 0..(1usize << n) {
            let mut p: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect();
            p[k] = 1.0 - (0..n).filter(|&i| i != k).map(|i| p[i]).sum::<f64>();
            if p[k] >= lo[k] - 1e-12 && p[k] <= hi[k] + 1e-12 {
                out.push(p);
            }
        }
    }
    out
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    let lo = p.iter().map(|&x| (x - 0.4 * rng.random::<f64>()).max(0.0)).collect();
    let hi = p.iter().map(|&x| (x + 0.4 * rng.random::<f64>()).min(1.0)).collect();
    (lo, hi)
}

#[test]
fn allocation_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let (lo, hi) = random_row(&mut rng, n);
        let v: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let ex = |p: &[f64]| p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let vs = vertices(&lo, &hi);
        let bmin = vs.iter().map(|p| ex(p)).fold(f64::INFINITY, f64::min);
        let bmax = vs.iter().map(|p| ex(p)).fold(f64::NEG_INFINITY, f64::max);
        for (mode, best) in [(Mode::Pessimistic, bmin), (Mode::Optimistic, bmax)] {
            let p = allocate(&lo, &hi, &v, mode);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| *l <= *x && *x <= *h));
            worst = worst.max((ex(&p) - best).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

/// Reach probabilities of a Markov chain with absorbing targets: zero where
/// the target is unreachable, a linear solve elsewhere.
fn chain_reach(p: &[Vec<f64>], target: &[bool]) -> Vec<f64> {
    let n = p.len();
    let mut can = target.to_vec();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !can[i] && (0..n).any(|j| p[i][j] > 0.0 && can[j]) {
                can[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| can[i] && !target[i]).collect();
    let m = idx.len();
    let mut a = crate::linalg::Matrix::zeros(m, m + 1);
    for (r, &i) in idx.iter().enumerate() {
        a[(r, r)] += 1.0;
        for (c, &j) in idx.iter().enumerate() {
            a[(r, c)] -= p[i][j];
        }
        a[(r, m)] = (0..n).filter(|&j| target[j]).map(|j| p[i][j]).sum();
    }
    // Gauss-Jordan with partial pivoting
    for c in 0..m {
        let piv = (c..m).max_by(|&x, &y| a[(x, c)].abs().total_cmp(&a[(y, c)].abs())).unwrap();
        for k in 0..=m {
            let t = a[(c, k)];
            a[(c, k)] = a[(piv, k)];
            a[(piv, k)] = t;
        }
        for r in 0..m {
            if r != c {
                let f = a[(r, c)] / a[(c, c)];
                for k in c..=m {
                    a[(r, k)] -= f * a[(c, k)];
                }
            }
        }
    }
    let mut x: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    for (r, &i) in idx.iter().enumerate() {
        x[i] = a[(r, m)] / a[(r, r)];
    }
    x
}

struct Small {
    imdp: Imdp,
    rows: Vec<Vec<Transition>>,
    target: Vec<bool>,
}

/// Random IMDP whose cell 0 is labelled `a`; `q_u` is last.
fn random_imdp(rng: &mut ChaCha8Rng, cells: usize, actions: usize) -> Small {
    let n = cells + 1;
    let mut rows = Vec::new();
    for _ in 0..cells * actions {
        let dests: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.7).collect();
        let dests = if dests.is_empty() { vec![rng.random_range(0..n)] } else { dests };
        let (lo, hi) = random_row(rng, dests.len());
        rows.push(dests.iter().enumerate().map(|(k, &d)| tr(d, lo[k], hi[k])).collect::<Vec<_>>());
    }
    let mut labels = vec![LabelSet::EMPTY; cells];
    labels[0] = A;
    let imdp = Imdp::new(actions, props(&["a", "b"]), labels, rows.clone()).unwrap();
    let mut target = vec![false; n];
    target[0] = true;
    Small { imdp, rows, target }
}

/// `max_σ min_ν` over memoryless strategies and vertex adversaries.
fn brute_force_value(s: &Small, actions: usize) -> Vec<f64> {
    let n = s.target.len();
    let free: Vec<usize> = (1..n - 1).collect();
    let mut best = vec![f64::NEG_INFINITY; n];
    for strat in 0..actions.pow(free.len() as u32) {
        let act: Vec<usize> = (0..free.len()).map(|k| strat / actions.pow(k as u32) % actions).collect();
        let choices: Vec<Vec<Vec<f64>>> = free
            .iter()
            .zip(&act)
            .map(|(&q, &a)| {
                let row = &s.rows[q * actions + a];
                let lo: Vec<f64> = row.iter().map(|t| t.lo).collect();
                let hi: Vec<f64> = row.iter().map(|t| t.hi).collect();
                vertices(&lo, &hi)
                    .into_iter()
                    .map(|v| {
                        let mut full = vec![0.0; n];
                        row.iter().zip(v).for_each(|(t, x)| full[t.dest] = x);
                        full
                    })
                    .collect()
            })
            .collect();
        let total: usize = choices.iter().map(Vec::len).product();
        let mut worst = vec![f64::INFINITY; n];
        for pick in 0..total {
            let mut p = vec![vec![0.0; n]; n];
            p[0][0] = 1.0;
            p[n - 1][n - 1] = 1.0;
            let mut r = pick;
            for (k, &q) in free.iter().enumerate() {
                p[q] = choices[k][r % choices[k].len()].clone();
                r /= choices[k].len();
            }
            let x = chain_reach(&p, &s.target);
            for i in 0..n {
                worst[i] = worst[i].min(x[i]);
            }
        }
        for i in 0..n {
            best[i] = best[i].max(worst[i]);
        }
    }
    best
}

#[test]
fn robust_values_match_brute_force_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dfa = Dfa::builtin("safe_reach").unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cells = rng.random_range(2..=4);
        let actions = rng.random_range(1..=2);
        let s = random_imdp(&mut rng, cells, actions);
        let prod = ProductImdp::new(&s.imdp, &dfa).unwrap();
        let out = robust_value_iteration(&prod, Mode::Pessimistic, None, 1e-13, 1_000_000).unwrap();
        let bf = brute_force_value(&s, actions);
        for q in 1..cells {
            let p = prod.state(q, 0);
            worst = worst.max((out.values[p] - bf[q]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn polytope_grid_oracle_on_three_states() {
    // s = 0, t = 1 (labelled a), u = q_u = 2
    let rows = vec![vec![tr(0, 0.1, 0.5), tr(1, 0.2, 0.6), tr(2, 0.1, 0.4)], vec![tr(1, 1.0, 1.0)]];
    let imdp = Imdp::new(1, props(&["a", "b"]), vec![LabelSet::EMPTY, A], rows).unwrap();
    let dfa = Dfa::builtin("safe_reach").unwrap();
    let res = synthesize_with(&imdp, &dfa, 0.5, 1e-12, 1_000_000).unwrap();
    // a stationary choice (p_s, p_t, p_u) reaches t with probability p_t / (1 - p_s)
    let mut bf_min = f64::INFINITY;
    let mut bf_max: f64 = 0.0;
    let step = 1e-4;
    let mut i = 0;
    loop {
        let pt = 0.2 + step * i as f64;
        if pt > 0.6 + 1e-12 {
            break;
        }
        let mut k = 0;
        loop {
            let ps = 0.1 + step * k as f64;
            if ps > 0.5 + 1e-12 {
                break;
            }
            let pu = 1.0 - pt - ps;
            if (0.1 - 1e-12..=0.4 + 1e-12).contains(&pu) {
                let v = pt / (1.0 - ps);
                bf_min = bf_min.min(v);
                bf_max = bf_max.max(v);
            }
            k += 1;
        }
        i += 1;
    }
    assert!((res.lower[0] - bf_min).abs() < 1e-3, "{} vs {bf_min}", res.lower[0]);
    assert!((res.upper[0] - bf_max).abs() < 1e-3, "{} vs {bf_max}", res.upper[0]);
    assert_eq!(res.lower[1], 1.0);
}

#[test]
fn degenerate_intervals_reduce_to_mdp_value_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dfa = Dfa::builtin("safe_reach").unwrap();
    for _ in 0..20 {
        let cells = 6;
        let na = 2;
        let mut rows = Vec::new();
        let mut dense = Vec::new();
        for _ in 0..cells * na {
            let mut p: Vec<f64> = (0..=cells).map(|_| if rng.random::<f64>() < 0.5 { rng.random() } else { 0.0 }).collect();
            p[rng.random_range(0..=cells)] += 0.1;
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            rows.push(p.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(d, &x)| tr(d, x, x)).collect());
            dense.push(p);
        }
        let mut labels = vec![LabelSet::EMPTY; cells];
        labels[0] = A;
        let imdp = Imdp::new(na, props(&["a", "b"]), labels, rows).unwrap();
        let res = synthesize_with(&imdp, &dfa, 0.5, 1e-14, 1_000_000).unwrap();
        // plain MDP value iteration
        let mut v = vec![0.0; cells + 1];
        v[0] = 1.0;
        for _ in 0..100_000 {
            let mut nv = v.clone();
            for q in 1..cells {
                nv[q] = (0..na).map(|a| dense[q * na + a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()).fold(0.0, f64::max);
            }
            let d = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = nv;
            if d < 1e-15 {
                break;
            }
        }
        for q in 0..cells {
            assert!((res.lower[q] - v[q]).abs() < 1e-10, "{} {}", res.lower[q], v[q]);
            assert!((res.upper[q] - v[q]).abs() < 1e-10);
        }
    }
}

#[test]
fn trivial_specifications() {
    let rows = vec![vec![tr(0, 0.3, 0.6), tr(1, 0.3, 0.7), tr(2, 0.0, 0.1)], vec![tr(0, 0.5, 0.5), tr(1, 0.5, 0.5)]];
    let dfa = Dfa::builtin("safe_reach").unwrap();
    let all_a = Imdp::new(1, props(&["a", "b"]), vec![A, A], rows.clone()).unwrap();
    let r = synthesize(&all_a, &dfa, 0.95).unwrap();
    assert!(r.lower.iter().chain(&r.upper).all(|&p| p == 1.0));
    assert!(r.classes.iter().all(|&c| c == Class::Yes));
    let all_b = Imdp::new(1, props(&["a", "b"]), vec![B, LabelSet(3)], rows).unwrap();
    let r = synthesize(&all_b, &dfa, 0.95).unwrap();
    assert!(r.lower.iter().chain(&r.upper).all(|&p| p == 0.0));
    assert!(r.classes.iter().all(|&c| c == Class::No));
}

#[test]
fn alphabet_must_cover_used_props() {
    let rows = vec![vec![tr(0, 1.0, 1.0)]];
    let dfa = Dfa::builtin("safe_reach").unwrap();
    let imdp = Imdp::new(1, props(&["a", "z"]), vec![LabelSet(2)], rows.clone()).unwrap();
    assert_eq!(synthesize(&imdp, &dfa, 0.9), Err(Error::AlphabetMismatch("z".into())));
    // unused extra props are fine, and names are matched rather than positions
    let imdp = Imdp::new(1, props(&["z", "a"]), vec![LabelSet(2)], rows).unwrap();
    assert_eq!(synthesize(&imdp, &dfa, 0.9).unwrap().lower, vec![1.0]);
}

#[test]
fn bounds_ordered_and_pessimistic_iterates_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dfa = Dfa::builtin("safe_reach").unwrap();
    for _ in 0..20 {
        let s = random_imdp(&mut rng, 8, 2);
        let r = synthesize(&s.imdp, &dfa, 0.5).unwrap();
        assert!(r.lower.iter().zip(&r.upper).all(|(l, u)| 0.0 <= *l && l <= u && *u <= 1.0));
        let prod = ProductImdp::new(&s.imdp, &dfa).unwrap();
        let mut prev = vec![0.0; prod.num_states()];
        for k in 1..30 {
            let v = robust_value_iteration(&prod, Mode::Pessimistic, None, 0.0, k).unwrap().values;
            assert!(v.iter().zip(&prev).all(|(a, b)| *a >= *b - 1e-15));
            prev = v;
        }
    }
}

#[test]
fn lookup_depends_on_cell_and_automaton_state() {
    // cell 0 plain, cell 1 labelled a, cell 2 labelled c
    let rows = vec![
        vec![tr(0, 0.5, 0.5), tr(1, 0.5, 0.5)],
        vec![tr(2, 1.0, 1.0)],
        vec![tr(0, 1.0, 1.0)],
        vec![tr(1, 1.0, 1.0)],
        vec![tr(0, 1.0, 1.0)],
        vec![tr(2, 1.0, 1.0)],
    ];
    let imdp = Imdp::new(2, props(&["a", "b", "c"]), vec![LabelSet::EMPTY, A, LabelSet(4)], rows).unwrap();
    let dfa = Dfa::builtin("safe_reach_two").unwrap();
    let r = synthesize(&imdp, &dfa, 0.9).unwrap();
    assert_eq!(strategy_lookup(&r, &[0]).unwrap(), r.action(0, 0).unwrap());
    // in cell 0 after seeing a the controller heads for c, before it heads for a
    assert_eq!(strategy_lookup(&r, &[1, 0]).unwrap(), r.action(0, 1).unwrap());
    assert_eq!(strategy_lookup(&r, &[2, 0, 1, 0]).unwrap(), strategy_lookup(&r, &[1, 2, 0]).unwrap());
    assert!(strategy_lookup(&r, &[]).is_err());
    assert_eq!(strategy_lookup(&r, &[0, 3]).unwrap(), 0);
    assert!(r.lower.iter().all(|&p| p > 0.99));
}
