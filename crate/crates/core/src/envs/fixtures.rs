//! Built-in example MDPs: a 6-state river-swim chain and a 4×4 gridworld.
//! Both are weakly communicating.

use super::mdp::TabularMdp;

/// Six-state chain. Action 0 (downstream) always moves left and pays a small
/// reward at the leftmost state; action 1 (upstream) moves right with
/// probability 0.35, stays with 0.6, slips left with 0.05, and pays reward 1
/// at the rightmost state. The optimal policy swims upstream everywhere.
pub fn riverswim() -> TabularMdp {
    let ns = 6;
    let na = 2;
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    let mut set = |x: usize, a: usize, xp: usize, prob: f64| {
        p[(x * na + a) * ns + xp] += prob;
    };
    for x in 0..ns {
        let left = x.saturating_sub(1);
        let right = (x + 1).min(ns - 1);
        // downstream: deterministic left
        set(x, 0, left, 1.0);
        // upstream: mostly stay, sometimes advance, rarely slip back
        set(x, 1, right, 0.35);
        set(x, 1, x, 0.60);
        set(x, 1, left, 0.05);
    }
    r[0] = 0.05; // r(0, downstream)
    r[(ns - 1) * na + 1] = 1.0; // r(5, upstream)
    TabularMdp::new(ns, na, p, r).expect("riverswim fixture is well-formed")
}

/// 4×4 gridworld, actions (up, down, left, right) with a 0.1 slip to a
/// uniformly random direction. Any action taken in the goal corner (state 15)
/// pays reward 1 and teleports to the start corner (state 0).
pub fn gridworld_4x4() -> TabularMdp {
    let side = 4;
    let ns = side * side;
    let na = 4;
    let goal = ns - 1;
    let slip = 0.1;
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    let neighbor = |x: usize, dir: usize| -> usize {
        let (row, col) = (x / side, x % side);
        let (nr, nc) = match dir {
            0 => (row.saturating_sub(1), col),
            1 => ((row + 1).min(side - 1), col),
            2 => (row, col.saturating_sub(1)),
            _ => (row, (col + 1).min(side - 1)),
        };
        nr * side + nc
    };
    for x in 0..ns {
        for a in 0..na {
            if x == goal {
                p[(x * na + a) * ns] = 1.0; // teleport to start
                r[x * na + a] = 1.0;
                continue;
            }
            for dir in 0..na {
                let weight = if dir == a {
                    1.0 - slip + slip / na as f64
                } else {
                    slip / na as f64
                };
                p[(x * na + a) * ns + neighbor(x, dir)] += weight;
            }
        }
    }
    TabularMdp::new(ns, na, p, r).expect("gridworld fixture is well-formed")
}
