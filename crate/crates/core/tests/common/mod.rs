#![allow(dead_code)]

pub mod sharma;
