use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::streams::UserId;

/// A point in parameter space (or a gradient): the flattened shared
/// parameters plus one vector per user embedding.
///
/// Users absent from `users` are treated as zero vectors by every operation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVec {
    pub shared: Vec<f64>,
    pub users: BTreeMap<UserId, Vec<f64>>,
}

impl ParamVec {
    pub fn new(shared: Vec<f64>) -> Self {
        ParamVec {
            shared,
            users: BTreeMap::new(),
        }
    }

    /// Total number of coordinates.
    pub fn len(&self) -> usize {
        self.shared.len() + self.users.values().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dot(&self, other: &ParamVec) -> f64 {
        let mut s = dot(&self.shared, &other.shared);
        for (u, a) in &self.users {
            if let Some(b) = other.users.get(u) {
                s += dot(a, b);
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`, creating user entries as needed.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVec) {
        for (a, b) in self.shared.iter_mut().zip(&other.shared) {
            *a += alpha * b;
        }
        for (u, b) in &other.users {
            let a = self.users.entry(*u).or_insert_with(|| vec![0.0; b.len()]);
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.shared.iter().chain(self.users.values().flatten())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.shared.iter_mut().chain(self.users.values_mut().flatten())
    }

    /// Coordinate `i` in the order shared-then-users (ascending user id).
    pub fn get(&self, i: usize) -> Option<f64> {
        self.values().nth(i).copied()
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut f64> {
        self.values_mut().nth(i)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_users_count_as_zero() {
        let mut a = ParamVec::new(vec![1.0, 2.0]);
        a.users.insert(3, vec![1.0]);
        let mut b = ParamVec::new(vec![3.0, 4.0]);
        b.users.insert(5, vec![7.0]);
        assert_eq!(a.dot(&b), 11.0);
        a.axpy(2.0, &b);
        assert_eq!(a.shared, vec![7.0, 10.0]);
        assert_eq!(a.users[&5], vec![14.0]);
        assert_eq!(a.len(), 4);
        assert_eq!(a.get(3), Some(14.0));
    }
}
