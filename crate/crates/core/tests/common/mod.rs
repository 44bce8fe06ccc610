#![allow(dead_code)]

pub mod fixtures;
pub mod gradcheck;
pub mod oracle;
pub mod props;
pub mod stats;
