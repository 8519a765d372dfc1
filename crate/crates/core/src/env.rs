//! Benchmark environments as exact tabular MDPs, a sampling front-end, the
//! text maze-map format and a seeded random-maze generator.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::mdp::{ActionId, MdpBuilder, StateId, TabularMdp};

pub const RIVERSWIM_GAMMA: f64 = 0.95;
pub const SIXARMS_GAMMA: f64 = 0.95;
pub const CHAIN_GAMMA: f64 = 0.95;
pub const LOOP_GAMMA: f64 = 0.95;
pub const FLAG_MAZE_GAMMA: f64 = 0.99;
pub const MAZE_GAMMA: f64 = 0.98;
pub const CHAIN_SLIP: f64 = 0.2;

/// Default FlagMaze layout: 6 rows by 7 columns, three flags.
pub const FLAG_MAZE_MAP: &str = "\
S..#..F
.#.#.#.
.#.#.#.
.#F#.#.
F#.#.#.
.#...#G
";

const SIXARMS_DATA: &str = include_str!("../data/sixarms.json");

/// An exact benchmark MDP together with its start state.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub mdp: TabularMdp,
    pub start: StateId,
    /// Reset to `start` after landing in a terminal state.
    pub episodic: bool,
    /// Source map for grid environments.
    pub map: Option<MazeMap>,
}

impl Environment {
    fn continuing(name: &str, mdp: TabularMdp, start: StateId) -> Self {
        Self { name: name.to_string(), mdp, start, episodic: false, map: None }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.mdp = self.mdp.with_gamma(gamma)?;
        Ok(self)
    }
}

/// Per-run sampling state over a shared [`Environment`].
#[derive(Debug, Clone)]
pub struct EnvInstance {
    env: Arc<Environment>,
    state: StateId,
    rng: ChaCha8Rng,
}

impl EnvInstance {
    pub fn new(env: Arc<Environment>, seed: u64) -> Self {
        let state = env.start;
        Self { env, state, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.env.mdp
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn reset(&mut self) -> StateId {
        self.state = self.env.start;
        self.state
    }

    /// Teleports to `x` without consuming randomness.
    pub fn set_state(&mut self, x: StateId) -> Result<()> {
        check_index("state", x, self.env.mdp.n_states())?;
        self.state = x;
        Ok(())
    }

    /// Samples one transition from the current state. Every call consumes
    /// exactly one uniform draw, so streams stay aligned across actions.
    pub fn step(&mut self, a: ActionId) -> Result<(StateId, f64)> {
        check_index("action", a, self.env.mdp.n_actions())?;
        let row = self.env.mdp.row(self.state, a);
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut chosen = row[row.len() - 1];
        for t in row {
            acc += t.prob;
            if u < acc {
                chosen = *t;
                break;
            }
        }
        self.state = chosen.next;
        if self.env.episodic && self.env.mdp.terminal_states().binary_search(&chosen.next).is_ok() {
            self.state = self.env.start;
        }
        Ok((chosen.next, chosen.reward))
    }
}

/// Six states in a line. Action 0 swims down (always succeeds), action 1
/// swims up against the current.
pub fn riverswim() -> Environment {
    const N: usize = 6;
    let mut b = MdpBuilder::new(N, 2, RIVERSWIM_GAMMA);
    for x in 0..N {
        let down = x.saturating_sub(1);
        b.add(x, 0, down, 1.0, if x == 0 { 5.0 } else { 0.0 });
    }
    b.add(0, 1, 0, 0.7, 0.0).add(0, 1, 1, 0.3, 0.0);
    for x in 1..N - 1 {
        b.add(x, 1, x + 1, 0.3, 0.0).add(x, 1, x, 0.6, 0.0).add(x, 1, x - 1, 0.1, 0.0);
    }
    b.add(N - 1, 1, N - 1, 0.3, 10_000.0).add(N - 1, 1, N - 2, 0.7, 0.0);
    Environment::continuing("riverswim", b.build().expect("riverswim is well formed"), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SixArmsTable {
    pub probs: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl SixArmsTable {
    pub fn shipped() -> Self {
        serde_json::from_str(SIXARMS_DATA).expect("bundled sixarms table parses")
    }
}

/// Centre state 0 plus six payoff states. Arm `k` in the centre moves to
/// payoff state `k + 1` with probability `p_k`; there, action `k` pays
/// `r_k` and keeps the agent in place, any other action returns it to the
/// centre.
pub fn sixarms() -> Environment {
    sixarms_from(&SixArmsTable::shipped()).expect("bundled sixarms table is valid")
}

pub fn sixarms_from(table: &SixArmsTable) -> Result<Environment> {
    let k = table.probs.len();
    if k == 0 || table.rewards.len() != k {
        return Err(Error::Config("sixarms table needs equally many probabilities and rewards".into()));
    }
    if table.probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::Config("sixarms probabilities must lie in (0, 1]".into()));
    }
    let mut b = MdpBuilder::new(k + 1, k, SIXARMS_GAMMA);
    for arm in 0..k {
        let p = table.probs[arm];
        b.add(0, arm, arm + 1, p, 0.0).add(0, arm, 0, 1.0 - p, 0.0);
    }
    for payoff in 0..k {
        for a in 0..k {
            if a == payoff {
                b.add(payoff + 1, a, payoff + 1, 1.0, table.rewards[payoff]);
            } else {
                b.add(payoff + 1, a, 0, 1.0, 0.0);
            }
        }
    }
    Ok(Environment::continuing("sixarms", b.build()?, 0))
}

/// Five states in a row. Action 0 advances, action 1 returns to state 0;
/// with probability `slip` the other action is executed instead. Executing
/// the return pays 2, executing the advance in the last state pays 10 and
/// keeps the agent there.
pub fn chain(slip: f64) -> Result<Environment> {
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::Config(format!("chain slip probability {slip} outside [0, 1]")));
    }
    const N: usize = 5;
    let mut b = MdpBuilder::new(N, 2, CHAIN_GAMMA);
    for x in 0..N {
        for a in 0..2 {
            for (executed, p) in [(a, 1.0 - slip), (1 - a, slip)] {
                let (y, r) = match executed {
                    0 if x + 1 < N => (x + 1, 0.0),
                    0 => (x, 10.0),
                    _ => (0, 2.0),
                };
                b.add(x, a, y, p, r);
            }
        }
    }
    Ok(Environment::continuing("chain", b.build()?, 0))
}

/// Nine states in a figure eight around state 0. Action 0 from the centre
/// enters the first loop (states 1-4), where either action advances and
/// closing the loop pays 1. Action 1 enters the second loop (states 5-8),
/// where only action 1 advances and closing it pays 2; action 0 there
/// returns to the centre unpaid.
pub fn loop_env() -> Environment {
    let mut b = MdpBuilder::new(9, 2, LOOP_GAMMA);
    b.add(0, 0, 1, 1.0, 0.0).add(0, 1, 5, 1.0, 0.0);
    for x in 1..=4 {
        let (y, r) = if x == 4 { (0, 1.0) } else { (x + 1, 0.0) };
        b.add(x, 0, y, 1.0, r).add(x, 1, y, 1.0, r);
    }
    for x in 5..=8 {
        let (y, r) = if x == 8 { (0, 2.0) } else { (x + 1, 0.0) };
        b.add(x, 1, y, 1.0, r).add(x, 0, 0, 1.0, 0.0);
    }
    Environment::continuing("loop", b.build().expect("loop is well formed"), 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Blocked,
    Punishing,
    Start,
    Goal,
    Subgoal,
    Flag,
}

impl Cell {
    pub fn symbol(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Blocked => '#',
            Cell::Punishing => 'P',
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Subgoal => 'g',
            Cell::Flag => 'F',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            '.' => Cell::Free,
            '#' => Cell::Blocked,
            'P' => Cell::Punishing,
            'S' => Cell::Start,
            'G' => Cell::Goal,
            'g' => Cell::Subgoal,
            'F' => Cell::Flag,
            _ => return None,
        })
    }
}

/// Rectangular grid with exactly one start and at least one goal. Cells
/// outside the grid behave as walls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

/// Grid moves in action order: up, right, down, left.
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl MazeMap {
    pub fn new(width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(Error::Usage("maze dimensions do not match the cell count".into()));
        }
        let map = Self { width, height, cells };
        let starts = map.cells.iter().filter(|&&c| c == Cell::Start).count();
        if starts != 1 {
            return Err(Error::Usage(format!("maze needs exactly one start, found {starts}")));
        }
        if !map.cells.contains(&Cell::Goal) {
            return Err(Error::Usage("maze needs at least one goal".into()));
        }
        Ok(map)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut width = None;
        let mut height = 0;
        let mut start: Option<(usize, usize)> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let mut n = 0;
            for (j, ch) in line.chars().enumerate() {
                let cell = Cell::from_symbol(ch).ok_or_else(|| Error::Parse {
                    line: lineno,
                    column: j + 1,
                    message: format!("unknown cell symbol {ch:?}"),
                })?;
                if cell == Cell::Start {
                    if let Some((l, c)) = start {
                        return Err(Error::Parse {
                            line: lineno,
                            column: j + 1,
                            message: format!("second start cell (first at line {l}, column {c})"),
                        });
                    }
                    start = Some((lineno, j + 1));
                }
                cells.push(cell);
                n += 1;
            }
            match width {
                None => width = Some(n),
                Some(w) if w != n => {
                    return Err(Error::Parse {
                        line: lineno,
                        column: n.min(w) + 1,
                        message: format!("row has {n} cells, expected {w}"),
                    })
                }
                _ => {}
            }
            height += 1;
        }
        let Some(width) = width else {
            return Err(Error::Parse { line: 1, column: 1, message: "empty map".into() });
        };
        if start.is_none() {
            return Err(Error::Parse { line: 1, column: 1, message: "map has no start cell 'S'".into() });
        }
        if !cells.contains(&Cell::Goal) {
            return Err(Error::Parse { line: 1, column: 1, message: "map has no goal cell 'G'".into() });
        }
        Ok(Self { width, height, cells })
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            out.extend(self.cells[r * self.width..(r + 1) * self.width].iter().map(|c| c.symbol()));
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn count(&self, kind: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    pub fn start(&self) -> (usize, usize) {
        let i = self.cells.iter().position(|&c| c == Cell::Start).expect("validated map has a start");
        (i / self.width, i % self.width)
    }

    pub fn positions(&self, kind: Cell) -> Vec<(usize, usize)> {
        (0..self.cells.len()).filter(|&i| self.cells[i] == kind).map(|i| (i / self.width, i % self.width)).collect()
    }

    /// Cell reached by moving in direction `dir`, or `None` on a bump.
    pub fn neighbour(&self, (r, c): (usize, usize), dir: usize) -> Option<(usize, usize)> {
        let (dr, dc) = MOVES[dir];
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        if nr >= self.height || nc >= self.width || self.get(nr, nc) == Cell::Blocked {
            None
        } else {
            Some((nr, nc))
        }
    }

    /// Open cells in row-major order; the grid environments number their
    /// positions this way.
    pub fn open_cells(&self) -> Vec<(usize, usize)> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] != Cell::Blocked)
            .map(|i| (i / self.width, i % self.width))
            .collect()
    }

    fn open_index(&self) -> Vec<Option<usize>> {
        let mut idx = vec![None; self.cells.len()];
        for (k, (r, c)) in self.open_cells().into_iter().enumerate() {
            idx[r * self.width + c] = Some(k);
        }
        idx
    }

    /// Whether some goal can be reached from the start without entering a
    /// subgoal (which would reset the agent).
    pub fn goal_reachable(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let start = self.start();
        let mut queue = VecDeque::from([start]);
        seen[start.0 * self.width + start.1] = true;
        while let Some(pos) = queue.pop_front() {
            if self.get(pos.0, pos.1) == Cell::Goal {
                return true;
            }
            if self.get(pos.0, pos.1) == Cell::Subgoal {
                continue;
            }
            for dir in 0..4 {
                if let Some(n) = self.neighbour(pos, dir) {
                    let i = n.0 * self.width + n.1;
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        false
    }
}

impl FromStr for MazeMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for MazeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Flag-collecting maze. The state is (open cell, set of flags held).
/// Moves succeed with probability 0.9 and otherwise veer to one of the two
/// perpendicular directions; bumping into a wall leaves the agent in place.
/// Entering the goal pays the number of flags held and restarts the agent
/// at the start with no flags.
pub fn flag_maze(map: &MazeMap) -> Result<Environment> {
    let flags = map.positions(Cell::Flag);
    if flags.len() != 3 {
        return Err(Error::Config(format!("flag maze needs exactly 3 flags, found {}", flags.len())));
    }
    const SLIP: f64 = 0.1;
    const MASKS: usize = 8;
    let open = map.open_cells();
    let idx = map.open_index();
    let state = |pos: (usize, usize), mask: usize| idx[pos.0 * map.width + pos.1].expect("open cell") * MASKS + mask;
    let start = state(map.start(), 0);
    let mut b = MdpBuilder::new(open.len() * MASKS, 4, FLAG_MAZE_GAMMA);
    for &pos in &open {
        for mask in 0..MASKS {
            let x = state(pos, mask);
            for a in 0..4 {
                for (dir, p) in [(a, 1.0 - SLIP), ((a + 1) % 4, SLIP / 2.0), ((a + 3) % 4, SLIP / 2.0)] {
                    let to = map.neighbour(pos, dir).unwrap_or(pos);
                    let mut held = mask;
                    if let Some(f) = flags.iter().position(|&q| q == to) {
                        held |= 1 << f;
                    }
                    if map.get(to.0, to.1) == Cell::Goal {
                        b.add(x, a, start, p, held.count_ones() as f64);
                    } else {
                        b.add(x, a, state(to, held), p, 0.0);
                    }
                }
            }
        }
    }
    b.reward_bound(flags.len() as f64);
    Ok(Environment { name: "flag_maze".into(), mdp: b.build()?, start, episodic: false, map: Some(map.clone()) })
}

pub fn flag_maze_default() -> Environment {
    flag_maze(&MazeMap::parse(FLAG_MAZE_MAP).expect("bundled map parses")).expect("bundled map is valid")
}

/// Generator and reward settings for the random maze with subgoals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeConfig {
    /// Side length including the outer wall.
    pub size: usize,
    pub seed: u64,
    pub blocked_fraction: f64,
    pub punishing_fraction: f64,
    /// Probability that the chosen action is replaced by a uniformly random one.
    pub random_action: f64,
    pub step_reward: f64,
    pub bump_reward: f64,
    pub punish_reward: f64,
    /// Add the punishment to the step cost instead of replacing it.
    pub punish_additive: bool,
    pub goal_reward: f64,
    pub subgoal_reward: f64,
    pub max_attempts: usize,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            size: 50,
            seed: 0,
            blocked_fraction: 0.2,
            punishing_fraction: 0.2,
            random_action: 0.1,
            step_reward: -1.0,
            bump_reward: -2.0,
            punish_reward: -10.0,
            punish_additive: false,
            goal_reward: 1000.0,
            subgoal_reward: 500.0,
            max_attempts: 1000,
        }
    }
}

/// Random square maze: start just inside one corner, goal in the opposite
/// corner, subgoals in the two remaining corners, and the given fractions
/// of the other interior cells blocked or punishing. Layouts where the goal
/// is unreachable are redrawn.
pub fn generate_maze(cfg: &MazeConfig) -> Result<MazeMap> {
    let n = cfg.size;
    if n < 5 {
        return Err(Error::Config(format!("maze size must be at least 5, got {n}")));
    }
    let fb = cfg.blocked_fraction;
    let fp = cfg.punishing_fraction;
    if !(fb >= 0.0 && fp >= 0.0 && fb + fp <= 1.0) {
        return Err(Error::Config("blocked and punishing fractions must be nonnegative and sum to at most 1".into()));
    }
    let mut base = vec![Cell::Blocked; n * n];
    for r in 1..n - 1 {
        for c in 1..n - 1 {
            base[r * n + c] = Cell::Free;
        }
    }
    base[n + 1] = Cell::Start;
    base[(n - 2) * n + n - 2] = Cell::Goal;
    base[n + n - 2] = Cell::Subgoal;
    base[(n - 2) * n + 1] = Cell::Subgoal;
    let candidates: Vec<usize> = (0..n * n).filter(|&i| base[i] == Cell::Free).collect();
    let n_blocked = (fb * candidates.len() as f64).round() as usize;
    let n_punish = (fp * candidates.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.max_attempts.max(1) {
        let mut order = candidates.clone();
        order.shuffle(&mut rng);
        let mut cells = base.clone();
        for &i in &order[..n_blocked] {
            cells[i] = Cell::Blocked;
        }
        for &i in &order[n_blocked..n_blocked + n_punish] {
            cells[i] = Cell::Punishing;
        }
        let map = MazeMap::new(n, n, cells)?;
        if map.goal_reachable() {
            return Ok(map);
        }
    }
    Err(Error::Config(format!(
        "no maze with a reachable goal after {} attempts (size {n}, seed {})",
        cfg.max_attempts, cfg.seed
    )))
}

/// Grid MDP over the open cells of `map` with the reward rules in `cfg`.
/// Entering a goal or subgoal pays its reward and moves the agent to the
/// start in the same transition.
pub fn maze_env(map: &MazeMap, cfg: &MazeConfig) -> Result<Environment> {
    if !(0.0..=1.0).contains(&cfg.random_action) {
        return Err(Error::Config(format!("random action probability {} outside [0, 1]", cfg.random_action)));
    }
    let open = map.open_cells();
    let idx = map.open_index();
    let state = |pos: (usize, usize)| idx[pos.0 * map.width + pos.1].expect("open cell");
    let start = state(map.start());
    let punish = if cfg.punish_additive { cfg.step_reward + cfg.punish_reward } else { cfg.punish_reward };
    let mut b = MdpBuilder::new(open.len(), 4, MAZE_GAMMA);
    for &pos in &open {
        let x = state(pos);
        let here = map.get(pos.0, pos.1);
        for a in 0..4 {
            if matches!(here, Cell::Goal | Cell::Subgoal) {
                // Never occupied: entering these cells already restarts the agent.
                b.add(x, a, start, 1.0, 0.0);
                continue;
            }
            for dir in 0..4 {
                let mut p = cfg.random_action / 4.0;
                if dir == a {
                    p += 1.0 - cfg.random_action;
                }
                let (y, r) = match map.neighbour(pos, dir) {
                    None => (x, cfg.bump_reward),
                    Some(to) => match map.get(to.0, to.1) {
                        Cell::Goal => (start, cfg.goal_reward),
                        Cell::Subgoal => (start, cfg.subgoal_reward),
                        Cell::Punishing => (state(to), punish),
                        _ => (state(to), cfg.step_reward),
                    },
                };
                b.add(x, a, y, p, r);
            }
        }
    }
    b.reward_bound(cfg.goal_reward.max(cfg.subgoal_reward));
    Ok(Environment {
        name: "maze_with_subgoals".into(),
        mdp: b.build()?,
        start,
        episodic: false,
        map: Some(map.clone()),
    })
}

pub fn maze_with_subgoals(cfg: &MazeConfig) -> Result<Environment> {
    maze_env(&generate_maze(cfg)?, cfg)
}

fn default_slip() -> f64 {
    CHAIN_SLIP
}

/// Declarative environment reference, addressable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Riverswim,
    Sixarms {
        #[serde(default)]
        table: Option<SixArmsTable>,
    },
    Chain {
        #[serde(default = "default_slip")]
        slip: f64,
    },
    Loop,
    FlagMaze {
        /// Map text; the bundled layout when absent.
        #[serde(default)]
        map: Option<String>,
    },
    MazeWithSubgoals(MazeConfig),
}

pub const ENV_NAMES: [&str; 6] = ["riverswim", "sixarms", "chain", "loop", "flag_maze", "maze_with_subgoals"];

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Riverswim => "riverswim",
            EnvSpec::Sixarms { .. } => "sixarms",
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::Loop => "loop",
            EnvSpec::FlagMaze { .. } => "flag_maze",
            EnvSpec::MazeWithSubgoals(_) => "maze_with_subgoals",
        }
    }

    pub fn build(&self) -> Result<Environment> {
        match self {
            EnvSpec::Riverswim => Ok(riverswim()),
            EnvSpec::Sixarms { table: None } => Ok(sixarms()),
            EnvSpec::Sixarms { table: Some(t) } => sixarms_from(t),
            EnvSpec::Chain { slip } => chain(*slip),
            EnvSpec::Loop => Ok(loop_env()),
            EnvSpec::FlagMaze { map: None } => Ok(flag_maze_default()),
            EnvSpec::FlagMaze { map: Some(text) } => flag_maze(&MazeMap::parse(text)?),
            EnvSpec::MazeWithSubgoals(cfg) => maze_with_subgoals(cfg),
        }
    }
}
