#![allow(dead_code)]

pub mod qp;
