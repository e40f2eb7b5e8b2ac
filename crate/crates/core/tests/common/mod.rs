#![allow(dead_code)]

pub mod sql_suite;
