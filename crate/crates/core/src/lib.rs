//! Generalized convex clustering.
//!
//! Fits convex clustering with arbitrary convex losses (Gecco), a shifted
//! group-lasso for feature selection (Gecco+), and their multi-view forms
//! over several data sources with different losses. The solver is an
//! inexact multi-block ADMM.
//!
//! Numerics are generic over [`Scalar`]; [`Dataset`], [`Fit`] and friends
//! fix the type to `f64`.

pub mod data;
pub mod diffgraph;
pub mod error;
pub mod eval;
pub mod loss;
pub mod path;
pub mod prox;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod weights;

pub use data::{MultiViewDataset, View};
pub use diffgraph::{extract_clusters, selected_features, DifferenceOperator};
pub use error::{GeccoError, Result};
pub use eval::{adjusted_rand_index, f1_selection};
pub use loss::LossSpec;
pub use path::{ClusteringPath, PathPoint};
pub use scalar::Scalar;
pub use solver::{Penalties, Solution, SolverMode, SolverOptions, SolverState};
pub use weights::WeightGraph;

pub type Dataset = MultiViewDataset<f64>;
pub type Loss = LossSpec<f64>;
pub type Graph = WeightGraph<f64>;
pub type Fit = Solution<f64>;
pub type Options = SolverOptions<f64>;
pub type Penalty = Penalties<f64>;
