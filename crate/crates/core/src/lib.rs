pub mod enumeration;
pub mod harness;
pub mod model_candles;
pub mod oracle;
pub mod par;
pub mod price;
pub mod simulator;
pub mod transform;
pub mod types;
pub mod wire;
