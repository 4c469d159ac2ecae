//! Shared test code: independent oracles, fixtures and property suites.
#![allow(dead_code)]

pub mod fixtures;
pub mod properties;
pub mod refdissect;
