pub mod canon;
pub mod fscrypto;
pub mod ledger;
pub mod verify;
pub mod abla;
pub mod message;
pub mod node;
pub mod txval;
pub mod netbcast;
pub mod scenario;
pub mod trace;
pub mod checker;
pub mod adversary;
pub mod sim;

pub use canon::Digest;
pub use checker::{check_trace, Check, Report, Verdict};
pub use ledger::{Amount, Configuration, History, ProcessId, Transaction, TxId};
pub use node::Mutation;
pub use scenario::{Behavior, Scenario, ScenarioError};
pub use sim::{fuzz, run, run_checked, FuzzSummary, RunOutcome, RunStats, SimOptions};
pub use trace::RunTrace;
