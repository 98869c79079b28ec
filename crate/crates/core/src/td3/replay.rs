use rand::Rng;

use crate::error::{Error, Result};

/// One `(s, a, r, s', done)` record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: [f64; 2],
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Mini-batch in row-major layout.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub size: usize,
    pub state_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(transitions: &[Transition]) -> Self {
        let state_dim = transitions.first().map_or(0, |t| t.s.len());
        let mut b = Batch {
            size: transitions.len(),
            state_dim,
            ..Default::default()
        };
        for t in transitions {
            b.states.extend_from_slice(&t.s);
            b.actions.extend_from_slice(&t.a);
            b.rewards.push(t.r);
            b.next_states.extend_from_slice(&t.s_next);
            b.dones.push(if t.done { 1.0 } else { 0.0 });
        }
        b
    }
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    len: usize,
    cursor: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize) -> Self {
        assert!(capacity > 0 && state_dim > 0);
        ReplayBuffer {
            capacity,
            state_dim,
            len: 0,
            cursor: 0,
            states: vec![0.0; capacity * state_dim],
            actions: vec![0.0; capacity * 2],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * state_dim],
            dones: vec![0.0; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, s: &[f64], a: [f64; 2], r: f64, s_next: &[f64], done: bool) -> Result<()> {
        let d = self.state_dim;
        if s.len() != d || s_next.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                got: if s.len() != d { s.len() } else { s_next.len() },
            });
        }
        let i = self.cursor;
        self.states[i * d..(i + 1) * d].copy_from_slice(s);
        self.actions[i * 2..i * 2 + 2].copy_from_slice(&a);
        self.rewards[i] = r;
        self.next_states[i * d..(i + 1) * d].copy_from_slice(s_next);
        self.dones[i] = if done { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn push_transition(&mut self, t: &Transition) -> Result<()> {
        self.push(&t.s, t.a, t.r, &t.s_next, t.done)
    }

    /// Record at storage slot `i` (not insertion order).
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let d = self.state_dim;
        Some(Transition {
            s: self.states[i * d..(i + 1) * d].to_vec(),
            a: [self.actions[2 * i], self.actions[2 * i + 1]],
            r: self.rewards[i],
            s_next: self.next_states[i * d..(i + 1) * d].to_vec(),
            done: self.dones[i] != 0.0,
        })
    }

    /// Uniform sample with replacement into `batch`, reusing its storage.
    pub fn sample_into(&self, size: usize, rng: &mut impl Rng, batch: &mut Batch) {
        assert!(self.len > 0, "sampling from an empty buffer");
        let d = self.state_dim;
        batch.size = size;
        batch.state_dim = d;
        batch.states.clear();
        batch.actions.clear();
        batch.rewards.clear();
        batch.next_states.clear();
        batch.dones.clear();
        for _ in 0..size {
            let i = rng.gen_range(0..self.len);
            batch.states.extend_from_slice(&self.states[i * d..(i + 1) * d]);
            batch.actions.extend_from_slice(&self.actions[2 * i..2 * i + 2]);
            batch.rewards.push(self.rewards[i]);
            batch.next_states.extend_from_slice(&self.next_states[i * d..(i + 1) * d]);
            batch.dones.push(self.dones[i]);
        }
    }
}
