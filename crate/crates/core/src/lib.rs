pub mod group;
pub mod harness;
pub mod certificate;
pub mod ice_frost;
pub mod prb;
pub mod simnet;
pub mod wcprb;
