pub mod acceptance;
pub mod error;
pub mod model;
pub mod observers;
pub mod ppc;
pub mod controller;
pub mod config;
pub mod sim;
