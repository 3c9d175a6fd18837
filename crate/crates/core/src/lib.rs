//! Build an AHP criteria hierarchy from a document corpus, weight it with a
//! panel of agents, and rank alternatives against it.

pub mod agents;
pub mod cluster;
pub mod corpus;
pub mod evalharness;
pub mod evidence;
pub mod hierarchy;
pub mod inference;
pub mod pipeline;
pub mod text;
pub mod weights;
