//! Trainable parameter storage.
//!
//! Parameters live outside the computation tape in a [`ParamStore`], grouped
//! into named [`ParamGroup`]s (one group per layer). The tape references
//! groups by [`GroupId`] and accumulates gradients back into the store, so a
//! fresh tape can be recorded for every batch while the parameters persist.
//! Group ids are dense indices handed out in creation order, which makes
//! every traversal of the store deterministic.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a parameter group inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub(crate) usize);

impl GroupId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named set of tensors that are trained together (e.g. one layer's
/// weight matrix and bias vector), plus their gradient accumulators.
#[derive(Clone, Debug)]
pub struct ParamGroup<T> {
    pub name: String,
    pub tensors: Vec<Tensor<T>>,
    pub grads: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamGroup<T> {
    /// Total number of scalar parameters in the group.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable parameters of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    groups: Vec<ParamGroup<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { groups: Vec::new() }
    }

    /// Registers a new group and returns its handle.
    pub fn add_group(&mut self, name: impl Into<String>, tensors: Vec<Tensor<T>>) -> GroupId {
        let grads = tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        self.groups.push(ParamGroup {
            name: name.into(),
            tensors,
            grads,
        });
        GroupId(self.groups.len() - 1)
    }

    pub fn group(&self, id: GroupId) -> &ParamGroup<T> {
        &self.groups[id.0]
    }

    pub fn group_mut(&mut self, id: GroupId) -> &mut ParamGroup<T> {
        &mut self.groups[id.0]
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &ParamGroup<T>)> {
        self.groups.iter().enumerate().map(|(i, g)| (GroupId(i), g))
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn tensor(&self, id: GroupId, slot: usize) -> &Tensor<T> {
        &self.groups[id.0].tensors[slot]
    }

    /// Replaces one tensor, keeping its shape. Used by checkpoint loading
    /// and by finite-difference probing.
    pub fn set_tensor(&mut self, id: GroupId, slot: usize, tensor: Tensor<T>) -> Result<()> {
        let current = &self.groups[id.0].tensors[slot];
        if current.shape() != tensor.shape() {
            return Err(Error::DimensionMismatch {
                op: "set_tensor",
                lhs: format!("{:?}", current.shape()),
                rhs: format!("{:?}", tensor.shape()),
            });
        }
        self.groups[id.0].tensors[slot] = tensor;
        Ok(())
    }

    /// Adds `delta` to a single parameter entry (finite-difference probe).
    pub fn nudge(&mut self, id: GroupId, slot: usize, index: usize, delta: T) {
        self.groups[id.0].tensors[slot].data_mut()[index] += delta;
    }

    /// Zeroes every gradient accumulator in the listed groups.
    pub fn zero_grads(&mut self, ids: &[GroupId]) {
        for &id in ids {
            for g in &mut self.groups[id.0].grads {
                g.fill_zero();
            }
        }
    }

    /// Zeroes every gradient accumulator in the store.
    pub fn zero_all_grads(&mut self) {
        for group in &mut self.groups {
            for g in &mut group.grads {
                g.fill_zero();
            }
        }
    }

    /// Adds a gradient contribution for one tensor of one group.
    pub fn accumulate_grad(&mut self, id: GroupId, slot: usize, grad: &Tensor<T>) -> Result<()> {
        self.groups[id.0].grads[slot].add_scaled(grad, T::one())
    }

    /// Total number of scalar parameters across the listed groups.
    pub fn param_count(&self, ids: &[GroupId]) -> usize {
        ids.iter().map(|&id| self.groups[id.0].len()).sum()
    }

    /// Concatenates the gradients of the listed groups into one flat vector.
    /// The order (group order, then tensor order, then row-major entries) is
    /// fixed, so vectors taken for different objectives are aligned.
    pub fn flatten_grads(&self, ids: &[GroupId]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count(ids));
        for &id in ids {
            for g in &self.groups[id.0].grads {
                out.extend_from_slice(g.data());
            }
        }
        out
    }

    /// Applies `value -= scale * update` across the listed groups, where
    /// `update` is flattened in the same order as [`Self::flatten_grads`].
    pub fn apply_flat_update(&mut self, ids: &[GroupId], update: &[T], scale: T) -> Result<()> {
        if update.len() != self.param_count(ids) {
            return Err(Error::DimensionMismatch {
                op: "apply_flat_update",
                lhs: format!("{} parameters", self.param_count(ids)),
                rhs: format!("{} update entries", update.len()),
            });
        }
        let mut cursor = 0;
        for &id in ids {
            for t in &mut self.groups[id.0].tensors {
                for v in t.data_mut() {
                    *v = *v - scale * update[cursor];
                    cursor += 1;
                }
            }
        }
        Ok(())
    }
}

/// Split of a model's parameter groups into one shared set (updated with
/// the reconciled multi-objective gradient) and one specific set per
/// objective (each updated only by its own objective's gradient).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamPartition {
    pub shared: Vec<GroupId>,
    pub specific: Vec<Vec<GroupId>>,
}

impl ParamPartition {
    pub fn objectives(&self) -> usize {
        self.specific.len()
    }

    /// Every group id mentioned by the partition, shared first.
    pub fn all_groups(&self) -> Vec<GroupId> {
        let mut ids = self.shared.clone();
        for spec in &self.specific {
            ids.extend_from_slice(spec);
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_two_groups() -> (ParamStore<f64>, GroupId, GroupId) {
        let mut store = ParamStore::new();
        let a = store.add_group(
            "layer0",
            vec![
                Tensor::matrix(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
                Tensor::vector(vec![0.5, -0.5]).unwrap(),
            ],
        );
        let b = store.add_group("layer1", vec![Tensor::vector(vec![10.0]).unwrap()]);
        (store, a, b)
    }

    #[test]
    fn group_ids_are_dense_and_ordered() {
        let (store, a, b) = store_with_two_groups();
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        let names: Vec<&str> = store.groups().map(|(_, g)| g.name.as_str()).collect();
        assert_eq!(names, ["layer0", "layer1"]);
    }

    #[test]
    fn flatten_order_is_group_then_tensor_then_entry() {
        let (mut store, a, b) = store_with_two_groups();
        store
            .accumulate_grad(a, 0, &Tensor::matrix(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap())
            .unwrap();
        store
            .accumulate_grad(a, 1, &Tensor::vector(vec![5.0, 6.0]).unwrap())
            .unwrap();
        store
            .accumulate_grad(b, 0, &Tensor::vector(vec![7.0]).unwrap())
            .unwrap();
        assert_eq!(
            store.flatten_grads(&[a, b]),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
        );
        // Subset flattening only sees that subset.
        assert_eq!(store.flatten_grads(&[b]), vec![7.0]);
    }

    #[test]
    fn apply_flat_update_descends_in_flatten_order() {
        let (mut store, a, b) = store_with_two_groups();
        let update = vec![1.0; 7];
        store.apply_flat_update(&[a, b], &update, 0.5).unwrap();
        assert_eq!(store.tensor(a, 0).data(), &[0.5, 1.5, 2.5, 3.5]);
        assert_eq!(store.tensor(a, 1).data(), &[0.0, -1.0]);
        assert_eq!(store.tensor(b, 0).data(), &[9.5]);
        // Wrong length is rejected with both sizes named.
        let err = store.apply_flat_update(&[a], &update, 1.0).unwrap_err();
        assert!(err.to_string().contains("6 parameters"));
    }

    #[test]
    fn zero_grads_only_touches_listed_groups() {
        let (mut store, a, b) = store_with_two_groups();
        store
            .accumulate_grad(a, 1, &Tensor::vector(vec![1.0, 1.0]).unwrap())
            .unwrap();
        store
            .accumulate_grad(b, 0, &Tensor::vector(vec![2.0]).unwrap())
            .unwrap();
        store.zero_grads(&[a]);
        assert_eq!(store.flatten_grads(&[a]), vec![0.0; 6]);
        assert_eq!(store.flatten_grads(&[b]), vec![2.0]);
    }

    #[test]
    fn set_tensor_enforces_shape() {
        let (mut store, a, _) = store_with_two_groups();
        let err = store
            .set_tensor(a, 1, Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("[2]") && err.to_string().contains("[3]"));
    }
}
