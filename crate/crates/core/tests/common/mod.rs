#![allow(dead_code)]

pub mod criteria;
