#![allow(dead_code)]

pub mod listings;
pub mod stub_server;
