//! Deterministic grid world with four actions and one-hot states.

use std::fmt;
use std::str::FromStr;

use super::HarnessError;

pub const ACTION_COUNT: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

/// `WIDTHxHEIGHT`, e.g. `5x5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub width: u32,
    pub height: u32,
}

impl FromStr for GridSize {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("grid size {s:?} is not WIDTHxHEIGHT"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width: u32 = w.trim().parse().map_err(|_| bad())?;
        let height: u32 = h.trim().parse().map_err(|_| bad())?;
        if width == 0 || height == 0 || width * height < 2 {
            return Err(bad());
        }
        Ok(Self { width, height })
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: u32,
    pub reward: f32,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub width: u32,
    pub height: u32,
    pub start: (u32, u32),
    pub goal: (u32, u32),
    pub step_penalty: f32,
    pub goal_reward: f32,
    pub max_steps: u32,
    pos: (u32, u32),
    steps: u32,
}

impl GridWorld {
    /// Start in the top-left corner, goal in the bottom-right one.
    pub fn new(size: GridSize) -> Self {
        Self::with_cells(size, (0, 0), (size.width - 1, size.height - 1))
    }

    pub fn with_cells(size: GridSize, start: (u32, u32), goal: (u32, u32)) -> Self {
        assert!(start.0 < size.width && start.1 < size.height, "start outside grid");
        assert!(goal.0 < size.width && goal.1 < size.height, "goal outside grid");
        Self {
            width: size.width,
            height: size.height,
            start,
            goal,
            step_penalty: -0.01,
            goal_reward: 1.0,
            max_steps: 200,
            pos: start,
            steps: 0,
        }
    }

    pub fn state_dim(&self) -> u32 {
        self.width * self.height
    }

    pub fn index(&self, cell: (u32, u32)) -> u32 {
        cell.1 * self.width + cell.0
    }

    pub fn cell(&self, index: u32) -> (u32, u32) {
        (index % self.width, index / self.width)
    }

    pub fn state(&self) -> u32 {
        self.index(self.pos)
    }

    pub fn goal_state(&self) -> u32 {
        self.index(self.goal)
    }

    pub fn one_hot(&self, state: u32) -> Vec<f32> {
        let mut v = vec![0.0; self.state_dim() as usize];
        v[state as usize] = 1.0;
        v
    }

    /// Length of the shortest path from start to goal.
    pub fn optimal_steps(&self) -> u32 {
        self.start.0.abs_diff(self.goal.0) + self.start.1.abs_diff(self.goal.1)
    }

    pub fn reset(&mut self) -> u32 {
        self.pos = self.start;
        self.steps = 0;
        self.state()
    }

    /// Pure transition function; moving into a wall leaves the agent in place.
    pub fn transition(&self, state: u32, action: Action) -> (u32, f32) {
        let (x, y) = self.cell(state);
        let next = match action {
            Action::Up => (x, y.saturating_sub(1)),
            Action::Down => (x, (y + 1).min(self.height - 1)),
            Action::Left => (x.saturating_sub(1), y),
            Action::Right => ((x + 1).min(self.width - 1), y),
        };
        let reward = if next == self.goal {
            self.goal_reward
        } else {
            self.step_penalty
        };
        (self.index(next), reward)
    }

    pub fn step(&mut self, action: Action) -> Step {
        let (next, reward) = self.transition(self.state(), action);
        self.pos = self.cell(next);
        self.steps += 1;
        Step {
            next_state: next,
            reward,
            done: next == self.goal_state() || self.steps >= self.max_steps,
        }
    }
}

/// Index of the hot entry of a one-hot vector.
pub fn decode_one_hot(v: &[f32]) -> Option<u32> {
    let (i, &x) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    (x > 0.0).then_some(i as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> GridWorld {
        GridWorld::new("5x5".parse().unwrap())
    }

    #[test]
    fn parses_sizes() {
        assert_eq!("5x5".parse::<GridSize>().unwrap(), GridSize { width: 5, height: 5 });
        assert_eq!("3X7".parse::<GridSize>().unwrap(), GridSize { width: 3, height: 7 });
        assert!("5".parse::<GridSize>().is_err());
        assert!("0x5".parse::<GridSize>().is_err());
        assert!("1x1".parse::<GridSize>().is_err());
    }

    #[test]
    fn walls_and_rewards() {
        let g = five();
        assert_eq!(g.transition(0, Action::Up), (0, -0.01));
        assert_eq!(g.transition(0, Action::Left), (0, -0.01));
        assert_eq!(g.transition(0, Action::Right), (1, -0.01));
        assert_eq!(g.transition(0, Action::Down), (5, -0.01));
        assert_eq!(g.transition(23, Action::Right), (24, 1.0));
        assert_eq!(g.transition(19, Action::Down), (24, 1.0));
        assert_eq!(g.optimal_steps(), 8);
    }

    #[test]
    fn episode_ends_at_goal_or_cap() {
        let mut g = five();
        g.reset();
        let mut last = None;
        for a in [Action::Right; 4].into_iter().chain([Action::Down; 4]) {
            last = Some(g.step(a));
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.next_state, 24);
        assert_eq!(last.reward, 1.0);

        g.max_steps = 3;
        g.reset();
        assert!(!g.step(Action::Up).done);
        assert!(!g.step(Action::Up).done);
        assert!(g.step(Action::Up).done);
    }

    #[test]
    fn one_hot_round_trip() {
        let g = five();
        for s in 0..25 {
            let v = g.one_hot(s);
            assert_eq!(v.iter().sum::<f32>(), 1.0);
            assert_eq!(decode_one_hot(&v), Some(s));
        }
        assert_eq!(decode_one_hot(&[0.0; 4]), None);
    }
}
