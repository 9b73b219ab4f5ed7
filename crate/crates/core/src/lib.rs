pub mod field;
pub mod hexutil;
pub mod pairing;
pub mod abe;
pub mod chain;
pub mod policy;
pub mod contracts;
pub mod netsim;
pub mod bench;
pub mod api;
