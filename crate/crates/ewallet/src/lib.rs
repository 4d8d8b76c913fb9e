//! Process side of the eWallet platform: configuration, the journal file,
//! the HTTP gateway and the command-line tools.

pub mod audit;
pub mod config;
pub mod http;
pub mod journal;
pub mod providers;
pub mod scenario;
pub mod service;
