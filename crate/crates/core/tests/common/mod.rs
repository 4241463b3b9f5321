#![allow(dead_code)]

pub mod instances;
pub mod texts;
