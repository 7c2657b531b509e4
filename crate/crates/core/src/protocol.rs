//! Topic names and JSON payloads exchanged between clients, the dispatcher
//! and workers. The same schemas are used on the simulated bus and on a real
//! MQTT broker.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::Decision;
use crate::partitioner::ClusterId;
use crate::registry::NodeId;
use crate::worker::{ResultDigest, TaskId};

pub mod topics {
    use crate::bus::{BusError, Topic};
    use crate::partitioner::ClusterId;
    use crate::registry::NodeId;

    pub const KEEPALIVE: &str = "pcio/keepalive";
    pub const DISPATCHER_INBOX: &str = "pcio/dispatcher/inbox";
    pub const DISPATCHER_SUBMIT: &str = "pcio/dispatcher/submit";

    fn fixed(path: &str) -> Topic {
        Topic::new(path).expect("static topic is well formed")
    }

    /// Results in leader-side tally mode; whoever leads `cluster` listens here.
    pub fn cluster_leader(cluster: ClusterId) -> Topic {
        fixed(&format!("pcio/cluster/{}/leader", cluster.0))
    }

    /// Task dispatch, fanned out to every member.
    pub fn cluster_group(cluster: ClusterId) -> Topic {
        fixed(&format!("pcio/cluster/{}/group", cluster.0))
    }

    pub fn node(id: &NodeId) -> Result<Topic, BusError> {
        Topic::new(format!("pcio/node/{id}"))
    }

    pub fn client_result(client: &str) -> Result<Topic, BusError> {
        Topic::new(format!("pcio/client/{client}/result"))
    }

    pub fn keepalive() -> Topic {
        fixed(KEEPALIVE)
    }

    pub fn dispatcher_inbox() -> Topic {
        fixed(DISPATCHER_INBOX)
    }

    pub fn dispatcher_submit() -> Topic {
        fixed(DISPATCHER_SUBMIT)
    }
}

#[derive(Debug, Error)]
#[error("malformed payload: {0}")]
pub struct ProtocolError(#[from] serde_json::Error);

pub fn encode<T: Serialize>(payload: &T) -> Vec<u8> {
    serde_json::to_vec(payload).expect("payload types serialize infallibly")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ProtocolError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Worker -> dispatcher liveness beacon on `pcio/keepalive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeepalivePayload {
    pub node_id: NodeId,
    pub period_s: f64,
    pub awake_fraction: f64,
    /// Sender's clock at emission.
    pub timestamp: f64,
}

/// Dispatcher -> cluster members on `pcio/cluster/<k>/group`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPayload {
    pub task_id: TaskId,
    pub kernel: String,
    pub size: u64,
    pub seed: u64,
    pub generation: u64,
    /// Distinguishes re-dispatches of the same task; echoed in results.
    #[serde(default)]
    pub dispatch_seq: u32,
}

/// Dispatcher -> one node on `pcio/node/<id>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeMessage {
    /// The node leads `cluster_id` and should listen on its leader channel.
    LeaderGrant {
        cluster_id: ClusterId,
        generation: u64,
        members: Vec<NodeId>,
    },
    /// The node belongs to `cluster_id` from `generation` on.
    ClusterAssign {
        cluster_id: ClusterId,
        generation: u64,
        leader: NodeId,
    },
    /// The node is in no cluster.
    ClusterRelease { generation: u64 },
}

/// One replica's answer. `digest` is null when execution errored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub task_id: TaskId,
    pub digest: Option<ResultDigest>,
    pub compute_s: f64,
    pub node_id: NodeId,
    #[serde(default)]
    pub dispatch_seq: u32,
}

/// Everything addressed to the dispatcher on `pcio/dispatcher/inbox`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InboxMessage {
    Result(ResultPayload),
    /// A leader finished tallying (leader-side tally mode).
    VoteDecided {
        task_id: TaskId,
        dispatch_seq: u32,
        cluster_id: ClusterId,
        decision: Decision,
        dissent_count: usize,
    },
    AssignAck {
        node_id: NodeId,
        cluster_id: ClusterId,
        generation: u64,
    },
}

/// Client -> dispatcher on `pcio/dispatcher/submit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitPayload {
    pub task_id: TaskId,
    pub client_id: String,
    pub kernel: String,
    pub size: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Accepted,
    Failed,
}

/// Dispatcher -> client on `pcio/client/<id>/result`, once per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientResultPayload {
    pub task_id: TaskId,
    pub status: TaskStatus,
    pub digest: Option<ResultDigest>,
    pub dissent_count: usize,
    pub wall_time_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worker::digest_values;
    use serde_json::{json, Value};

    fn as_value<T: Serialize>(t: &T) -> Value {
        serde_json::from_slice(&encode(t)).unwrap()
    }

    #[test]
    fn topic_scheme() {
        assert_eq!(topics::cluster_leader(ClusterId(3)).as_str(), "pcio/cluster/3/leader");
        assert_eq!(topics::cluster_group(ClusterId(3)).as_str(), "pcio/cluster/3/group");
        assert_eq!(topics::node(&"w01".into()).unwrap().as_str(), "pcio/node/w01");
        assert_eq!(topics::client_result("c1").unwrap().as_str(), "pcio/client/c1/result");
        assert_eq!(topics::keepalive().as_str(), "pcio/keepalive");
        assert!(topics::node(&"".into()).is_err());
    }

    #[test]
    fn keepalive_schema() {
        let k = KeepalivePayload {
            node_id: "w00".into(),
            period_s: 20.0,
            awake_fraction: 0.1,
            timestamp: 40.0,
        };
        assert_eq!(
            as_value(&k),
            json!({"node_id": "w00", "period_s": 20.0, "awake_fraction": 0.1, "timestamp": 40.0})
        );
    }

    #[test]
    fn dispatch_schema_accepts_payload_without_seq() {
        let raw = br#"{"task_id":"t1","kernel":"arc_dist","size":10,"seed":7,"generation":2}"#;
        let d: DispatchPayload = decode(raw).unwrap();
        assert_eq!(d.dispatch_seq, 0);
        assert_eq!(d.task_id, TaskId::from("t1"));
    }

    #[test]
    fn node_messages_are_tagged() {
        let g = NodeMessage::LeaderGrant {
            cluster_id: ClusterId(1),
            generation: 4,
            members: vec!["a".into(), "b".into()],
        };
        assert_eq!(
            as_value(&g),
            json!({"kind": "leader_grant", "cluster_id": 1, "generation": 4, "members": ["a", "b"]})
        );
        let back: NodeMessage = decode(&encode(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn result_digest_is_hex_or_null() {
        let digest = digest_values(&[1.0], 9);
        let r = ResultPayload {
            task_id: "t".into(),
            digest: Some(digest),
            compute_s: 1.5,
            node_id: "w1".into(),
            dispatch_seq: 0,
        };
        let v = as_value(&InboxMessage::Result(r.clone()));
        assert_eq!(v["kind"], "result");
        assert_eq!(v["digest"], Value::String(digest.to_string()));
        let err = ResultPayload { digest: None, ..r };
        assert_eq!(as_value(&err)["digest"], Value::Null);
    }

    #[test]
    fn client_result_schema() {
        let c = ClientResultPayload {
            task_id: "t".into(),
            status: TaskStatus::Failed,
            digest: None,
            dissent_count: 2,
            wall_time_s: 3.25,
        };
        assert_eq!(
            as_value(&c),
            json!({"task_id": "t", "status": "failed", "digest": null, "dissent_count": 2, "wall_time_s": 3.25})
        );
    }

    #[test]
    fn garbage_is_a_protocol_error() {
        assert!(decode::<SubmitPayload>(b"{not json").is_err());
        assert!(decode::<InboxMessage>(br#"{"kind":"nope"}"#).is_err());
    }
}
