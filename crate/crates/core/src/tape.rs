//! Reverse-mode autodiff over an append-only Wengert list.
//!
//! Ops executed against a recording [`Tape`] append one [`Node`] each, in
//! execution order. [`Tape::backward`] seeds the scalar loss with gradient 1,
//! walks the list once in reverse, accumulates cotangents per tensor identity,
//! and finally populates `grad` on every `requires_grad` leaf the tape saw.
//!
//! Recording is demand-driven: a node is recorded only when gradient can flow
//! through it, i.e. when some input either `requires_grad` or was itself
//! produced by a recorded node. With a frozen encoder this keeps the prefix of
//! the forward pass (embeddings, early layernorms) off the tape entirely.
//!
//! A tape belongs to one training context and one step: `backward` clears it,
//! and training loops must not share tapes. An inert tape ([`Tape::inert`])
//! records nothing and makes the same ops behave as plain inference.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ops::Op;
use crate::tensor::Tensor;

pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<Tensor>,
    pub output: Tensor,
    /// Per-input flag: does gradient need to be accumulated for this input?
    /// Decided at record time so backward never re-derives trackedness.
    pub needs: Vec<bool>,
}

pub struct Tape {
    recording: bool,
    nodes: RefCell<Vec<Node>>,
    /// Identities of tensors with a gradient path to some leaf.
    tracked: RefCell<HashSet<usize>>,
    /// `requires_grad` leaves encountered as op inputs, in first-seen order.
    leaves: RefCell<Vec<Tensor>>,
}

/// Gradient accumulators keyed by tensor identity, populated during backward.
pub(crate) struct GradMap {
    grads: HashMap<usize, Vec<f32>>,
}

impl GradMap {
    fn new() -> Self {
        GradMap {
            grads: HashMap::new(),
        }
    }

    pub(crate) fn get(&self, t: &Tensor) -> Option<&Vec<f32>> {
        self.grads.get(&t.key())
    }

    /// Elementwise-accumulate `delta` into the cotangent of `t`.
    pub(crate) fn accumulate(&mut self, t: &Tensor, delta: &[f32]) {
        debug_assert_eq!(delta.len(), t.numel());
        let slot = self
            .grads
            .entry(t.key())
            .or_insert_with(|| vec![0.0; t.numel()]);
        for (g, d) in slot.iter_mut().zip(delta) {
            *g += d;
        }
    }
}

impl Tape {
    /// A recording tape for one training step.
    pub fn new() -> Self {
        Tape {
            recording: true,
            nodes: RefCell::new(Vec::new()),
            tracked: RefCell::new(HashSet::new()),
            leaves: RefCell::new(Vec::new()),
        }
    }

    /// A tape that records nothing; use for inference.
    pub fn inert() -> Self {
        Tape {
            recording: false,
            ..Tape::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of recorded nodes (diagnostics and tests).
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all recorded state. `backward` does this implicitly.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
        self.tracked.borrow_mut().clear();
        self.leaves.borrow_mut().clear();
    }

    fn is_tracked(&self, t: &Tensor) -> bool {
        t.requires_grad() || self.tracked.borrow().contains(&t.key())
    }

    /// Record one executed op. Call after computing `output`; no-op unless
    /// this tape is recording and gradient can flow through some input.
    pub(crate) fn record(&self, op: Op, inputs: &[&Tensor], output: &Tensor) {
        if !self.recording {
            return;
        }
        let needs: Vec<bool> = inputs.iter().map(|t| self.is_tracked(t)).collect();
        if !needs.iter().any(|&n| n) {
            return;
        }
        self.tracked.borrow_mut().insert(output.key());
        let mut leaves = self.leaves.borrow_mut();
        for input in inputs {
            if input.requires_grad() && !leaves.iter().any(|l| l.key() == input.key()) {
                leaves.push((*input).clone());
            }
        }
        drop(leaves);
        self.nodes.borrow_mut().push(Node {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            output: output.clone(),
            needs,
        });
    }

    /// Reverse sweep: populate `grad` on every `requires_grad` leaf this tape
    /// recorded (zeros where the loss does not depend on the leaf), then clear
    /// the tape. On an empty tape this is a no-op.
    ///
    /// The loss must be the scalar produced by the final recorded op of this
    /// tape; each node is visited exactly once.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        if nodes.is_empty() {
            self.reset();
            return Ok(());
        }
        let mut grads = GradMap::new();
        grads.accumulate(loss, &[1.0]);
        for node in nodes.iter().rev() {
            let Some(dout) = grads.get(&node.output).cloned() else {
                continue; // no gradient reached this node's output
            };
            node.op.backward(node, &dout, &mut grads);
        }
        for leaf in self.leaves.borrow().iter() {
            match grads.get(leaf) {
                Some(g) => leaf.set_grad(g.clone()),
                None => leaf.set_grad(vec![0.0; leaf.numel()]),
            }
        }
        self.reset();
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_on_empty_tape_is_a_no_op() {
        let tape = Tape::new();
        tape.backward(&Tensor::scalar(3.0)).unwrap();
        assert!(tape.is_empty());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let tape = Tape::new();
        let err = tape.backward(&Tensor::zeros(vec![2, 2])).unwrap_err();
        assert!(err.to_string().contains("[2, 2]"), "got: {err}");
    }

    #[test]
    fn inert_tape_records_nothing() {
        let tape = Tape::inert();
        let p = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        let _ = crate::ops::sum(&tape, &p);
        assert!(tape.is_empty());
    }

    #[test]
    fn frozen_only_ops_stay_off_the_tape() {
        let tape = Tape::new();
        let a = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(vec![2], vec![3.0, 4.0]).unwrap();
        let _ = crate::ops::add(&tape, &a, &b).unwrap();
        assert!(tape.is_empty());
        let p = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        let _ = crate::ops::add(&tape, &p, &b).unwrap();
        assert_eq!(tape.len(), 1);
    }
}
