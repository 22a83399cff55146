pub mod homology;
