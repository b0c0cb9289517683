pub mod bench;
pub mod costing;
pub mod gadgets;
pub mod garble;
pub mod nn;
pub mod protocol;
pub mod quantizer;
pub mod rns;
