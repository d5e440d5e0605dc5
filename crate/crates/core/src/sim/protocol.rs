//! Wire formats for the live interfaces: newline-delimited JSON samples out,
//! newline-delimited JSON restart commands in.

use super::Scenario;
use serde::{Deserialize, Serialize};

/// `{"wan_id": ..., "time": ...}` on the command stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartCommand {
    pub wan_id: String,
    pub time: i64,
}

/// Outcome of a restart command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartStatus {
    /// Restart applied.
    Ok,
    /// Modem already offline; command acknowledged but a no-op.
    Ignored,
    NotFound,
}

/// `{"status": "ok"|"ignored"|"not_found"}` reply line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartReply {
    pub status: RestartStatus,
}

/// Apply one command line against a scenario and render the reply line.
/// Malformed lines reply `not_found` rather than killing the stream.
pub fn handle_command_line(scenario: &mut Scenario, line: &str) -> String {
    let reply = match serde_json::from_str::<RestartCommand>(line) {
        Ok(cmd) => match scenario.apply_restart(&cmd.wan_id, cmd.time) {
            Ok(status) => RestartReply { status },
            Err(_) => RestartReply { status: RestartStatus::NotFound },
        },
        Err(_) => RestartReply { status: RestartStatus::NotFound },
    };
    serde_json::to_string(&reply).expect("reply serializes")
}
