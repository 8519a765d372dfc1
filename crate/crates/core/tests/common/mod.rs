#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use oim_core::{MdpBuilder, Policy, TabularMdp};

/// Random simplex point with `support` nonzero entries out of `n`.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize, support: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut p = vec![0.0; n];
    let mut total = 0.0;
    for &i in &idx[..support.clamp(1, n)] {
        let w: f64 = -rng.gen::<f64>().max(1e-12).ln();
        p[i] = w;
        total += w;
    }
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Dense random MDP with rewards uniform in `[0, r0_max]`.
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64, r0_max: f64) -> TabularMdp {
    let mut b = MdpBuilder::new(n_states, n_actions, gamma);
    for x in 0..n_states {
        for a in 0..n_actions {
            let support = rng.gen_range(1..=n_states);
            let p = random_distribution(rng, n_states, support);
            for (y, &py) in p.iter().enumerate() {
                if py > 0.0 {
                    b.add(x, a, y, py, rng.gen::<f64>() * r0_max);
                }
            }
        }
    }
    b.reward_bound(r0_max);
    b.build().expect("random MDP is valid")
}

pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> Policy {
    if rng.gen_bool(0.5) {
        let acts: Vec<usize> = (0..n_states).map(|_| rng.gen_range(0..n_actions)).collect();
        Policy::deterministic(n_actions, &acts)
    } else {
        let probs: Vec<f64> = (0..n_states).flat_map(|_| random_distribution(rng, n_actions, n_actions)).collect();
        Policy::new(n_states, n_actions, probs).expect("rows sum to one")
    }
}

/// Dense `(P, P*R)` tensors indexed `[(x * |A| + a) * |X| + y]`.
pub fn dense(mdp: &TabularMdp) -> (Vec<f64>, Vec<f64>) {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut p = vec![0.0; ns * na * ns];
    let mut pr = vec![0.0; ns * na * ns];
    for x in 0..ns {
        for a in 0..na {
            for t in mdp.row(x, a) {
                let i = (x * na + a) * ns + t.next;
                p[i] = t.prob;
                pr[i] = t.prob * t.reward;
            }
        }
    }
    (p, pr)
}
