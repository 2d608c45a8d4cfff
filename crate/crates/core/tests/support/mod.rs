#![allow(dead_code)]

pub mod qp_oracle;
pub mod texture_oracle;
