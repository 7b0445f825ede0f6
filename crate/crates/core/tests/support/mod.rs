#![allow(dead_code)]

pub mod oracles;
pub mod phantom_set;
