#![allow(dead_code)]

pub mod checks;
pub mod instances;
pub mod scheduling;
pub mod transcription;
