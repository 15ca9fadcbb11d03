use ndarray::{Array2, ArrayView2};

use crate::error::{GeccoError, Result};
use crate::loss::LossSpec;
use crate::scalar::Scalar;

/// One data source: an `n x p` matrix with the loss used to fit it.
#[derive(Debug, Clone)]
pub struct View<F> {
    pub data: Array2<F>,
    pub loss: LossSpec<F>,
    pub names: Option<Vec<String>>,
    /// `true` where an entry is observed. `None` means fully observed.
    pub observed: Option<Array2<bool>>,
}

impl<F: Scalar> View<F> {
    pub fn new(data: Array2<F>, loss: LossSpec<F>) -> Self {
        View {
            data,
            loss,
            names: None,
            observed: None,
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn with_observed(mut self, observed: Array2<bool>) -> Self {
        self.observed = Some(observed);
        self
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn mask(&self) -> Option<ArrayView2<'_, bool>> {
        self.observed.as_ref().map(|m| m.view())
    }

    fn validate(&self, k: usize) -> Result<()> {
        let ctx = |e: GeccoError| match e {
            GeccoError::InvalidData(m) => GeccoError::InvalidData(format!("view {k}: {m}")),
            GeccoError::Shape(m) => GeccoError::Shape(format!("view {k}: {m}")),
            other => other,
        };
        if self.ncols() == 0 {
            return Err(GeccoError::Shape(format!("view {k} has no features")));
        }
        self.loss.validate()?;
        self.loss.check_data(self.data.view()).map_err(ctx)?;
        if let Some(names) = &self.names {
            if names.len() != self.ncols() {
                return Err(GeccoError::Shape(format!(
                    "view {k}: {} names for {} features",
                    names.len(),
                    self.ncols()
                )));
            }
        }
        if let Some(m) = &self.observed {
            if m.dim() != self.data.dim() {
                return Err(GeccoError::Shape(format!("view {k}: mask shape differs from data")));
            }
            if let Some(j) = (0..m.ncols()).find(|&j| !m.column(j).iter().any(|b| *b)) {
                return Err(GeccoError::InvalidData(format!(
                    "view {k}: column {j} has no observed entries"
                )));
            }
        }
        Ok(())
    }
}

/// `K` views over the same `n` samples.
#[derive(Debug, Clone)]
pub struct MultiViewDataset<F> {
    views: Vec<View<F>>,
    n: usize,
}

impl<F: Scalar> MultiViewDataset<F> {
    pub fn new(views: Vec<View<F>>) -> Result<Self> {
        let Some(first) = views.first() else {
            return Err(GeccoError::Empty("dataset has no views".into()));
        };
        let n = first.nrows();
        if n < 2 {
            return Err(GeccoError::InvalidData(format!("need at least 2 samples, got {n}")));
        }
        for (k, v) in views.iter().enumerate() {
            if v.nrows() != n {
                return Err(GeccoError::Shape(format!(
                    "view {k} has {} rows, expected {n}",
                    v.nrows()
                )));
            }
            v.validate(k)?;
        }
        Ok(MultiViewDataset { views, n })
    }

    pub fn single(data: Array2<F>, loss: LossSpec<F>) -> Result<Self> {
        Self::new(vec![View::new(data, loss)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn views(&self) -> &[View<F>] {
        &self.views
    }

    pub fn view(&self, k: usize) -> &View<F> {
        &self.views[k]
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn feature_counts(&self) -> Vec<usize> {
        self.views.iter().map(View::ncols).collect()
    }

    pub fn total_features(&self) -> usize {
        self.views.iter().map(View::ncols).sum()
    }

    pub fn has_missing(&self) -> bool {
        self.views.iter().any(|v| v.observed.is_some())
    }

    /// Copy of the dataset with per-view observation masks replaced.
    pub fn with_masks(&self, masks: Vec<Option<Array2<bool>>>) -> Result<Self> {
        if masks.len() != self.views.len() {
            return Err(GeccoError::Shape("one mask per view required".into()));
        }
        let views = self
            .views
            .iter()
            .zip(masks)
            .map(|(v, m)| View {
                observed: m,
                ..v.clone()
            })
            .collect();
        Self::new(views)
    }
}
