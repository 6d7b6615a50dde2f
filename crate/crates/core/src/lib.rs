//! Planar in-hand manipulation laboratory.
//!
//! A quasi-static environment where a ring of two-link fingers rotates an
//! object held in a fingertip grasp, three model-based sub-skill controllers
//! (in-grasp manipulation, contact switching, finger gaiting), and an
//! off-policy actor-critic trainer whose behavior policy interleaves learner
//! and controller actions through a critic-softmax gate, optionally with a
//! value-weighted behavior-cloning loss.

pub mod checkpoint;
pub mod config;
pub mod controllers;
pub mod env;
pub mod kinematics;
pub mod linalg;
pub mod nn;
pub mod plot;
pub mod qp;
pub mod rl;
pub mod rng;
pub mod trainer;
