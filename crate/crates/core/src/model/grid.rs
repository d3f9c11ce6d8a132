use crate::error::ModelError;
use crate::scalar::Scalar;

/// Boundary treatment of the truncated state box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Jumps that would leave the box are suppressed, so mass never escapes.
    #[default]
    Reflecting,
}

/// Time, state and action discretization of a finite-horizon problem.
///
/// States are flattened row-major: in two dimensions the flat index of
/// `(i0, i1)` is `i0 * n_state[1] + i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T = f64> {
    horizon: T,
    n_time: usize,
    state_box: Vec<(T, T)>,
    n_state: Vec<usize>,
    actions: Vec<Vec<T>>,
    boundary: Boundary,
    points: Vec<T>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(
        horizon: T,
        n_time: usize,
        state_box: Vec<(T, T)>,
        n_state: Vec<usize>,
        actions: Vec<Vec<T>>,
        boundary: Boundary,
    ) -> Result<Self, ModelError> {
        let dim = state_box.len();
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(ModelError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_time == 0 {
            return Err(ModelError::InvalidGrid("n_time must be at least 1".into()));
        }
        if !(1..=2).contains(&dim) {
            return Err(ModelError::InvalidGrid(format!("state_dim must be 1 or 2, got {dim}")));
        }
        if n_state.len() != dim {
            return Err(ModelError::InvalidGrid(format!(
                "n_state has {} entries for a {dim}-dimensional box",
                n_state.len()
            )));
        }
        for (d, (&(lo, hi), &n)) in state_box.iter().zip(&n_state).enumerate() {
            if n < 2 {
                return Err(ModelError::InvalidGrid(format!("n_state[{d}] must be at least 2")));
            }
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidGrid(format!("state_box[{d}] = [{lo}, {hi}] is empty")));
            }
        }
        if actions.is_empty() {
            return Err(ModelError::InvalidGrid("action list is empty".into()));
        }
        let action_dim = actions[0].len();
        if action_dim == 0 {
            return Err(ModelError::InvalidGrid("actions must have at least one component".into()));
        }
        for (j, a) in actions.iter().enumerate() {
            if a.len() != action_dim {
                return Err(ModelError::InvalidGrid(format!(
                    "action {j} has {} components, expected {action_dim}",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidGrid(format!("action {j} is not finite")));
            }
            if actions[..j].iter().any(|b| b == a) {
                return Err(ModelError::InvalidGrid(format!("action {j} duplicates an earlier action")));
            }
        }

        let total: usize = n_state.iter().product();
        let mut points = Vec::with_capacity(total * dim);
        for idx in 0..total {
            let mut rem = idx;
            let mut coords = [T::zero(); 2];
            for d in (0..dim).rev() {
                let i = rem % n_state[d];
                rem /= n_state[d];
                let (lo, hi) = state_box[d];
                let h = (hi - lo) / T::from_usize_lossy(n_state[d] - 1);
                coords[d] = lo + T::from_usize_lossy(i) * h;
            }
            points.extend_from_slice(&coords[..dim]);
        }

        Ok(Self { horizon, n_time, state_box, n_state, actions, boundary, points })
    }

    /// One-dimensional grid with `n` nodes on `[lo, hi]` and scalar actions.
    pub fn uniform_1d(horizon: T, n_time: usize, lo: T, hi: T, n: usize, actions: &[T]) -> Result<Self, ModelError> {
        Self::new(
            horizon,
            n_time,
            vec![(lo, hi)],
            vec![n],
            actions.iter().map(|&a| vec![a]).collect(),
            Boundary::Reflecting,
        )
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.n_time)
    }

    /// Time of node `k`.
    pub fn time(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dt()
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.len()
    }

    pub fn state_box(&self) -> &[(T, T)] {
        &self.state_box
    }

    pub fn n_state(&self) -> &[usize] {
        &self.n_state
    }

    pub fn spacing(&self, d: usize) -> T {
        let (lo, hi) = self.state_box[d];
        (hi - lo) / T::from_usize_lossy(self.n_state[d] - 1)
    }

    pub fn num_states(&self) -> usize {
        self.n_state.iter().product()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[Vec<T>] {
        &self.actions
    }

    pub fn action(&self, j: usize) -> &[T] {
        &self.actions[j]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Coordinates of flat state `idx`.
    pub fn point(&self, idx: usize) -> &[T] {
        let d = self.state_dim();
        &self.points[idx * d..(idx + 1) * d]
    }

    /// Per-dimension indices of flat state `idx`.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.state_dim()];
        let mut rem = idx;
        for d in (0..self.state_dim()).rev() {
            out[d] = rem % self.n_state[d];
            rem /= self.n_state[d];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> Option<usize> {
        if multi.len() != self.state_dim() {
            return None;
        }
        let mut idx = 0;
        for (d, &i) in multi.iter().enumerate() {
            if i >= self.n_state[d] {
                return None;
            }
            idx = idx * self.n_state[d] + i;
        }
        Some(idx)
    }

    /// Flat index of the neighbour `offset` cells away along each axis, if inside the box.
    pub fn neighbor(&self, idx: usize, offset: &[isize]) -> Option<usize> {
        let mut multi = self.multi_index(idx);
        for (d, &o) in offset.iter().enumerate() {
            let i = multi[d] as isize + o;
            if i < 0 || i >= self.n_state[d] as isize {
                return None;
            }
            multi[d] = i as usize;
        }
        self.flat_index(&multi)
    }

    /// Grid node closest to `x`.
    pub fn nearest(&self, x: &[T]) -> usize {
        let multi: Vec<usize> = (0..self.state_dim())
            .map(|d| {
                let (lo, _) = self.state_box[d];
                let r = ((x[d] - lo) / self.spacing(d)).round();
                let r = r.max(T::zero()).min(T::from_usize_lossy(self.n_state[d] - 1));
                r.to_usize().unwrap_or(0)
            })
            .collect();
        self.flat_index(&multi).expect("clamped index is inside the grid")
    }
}
