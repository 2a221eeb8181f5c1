use ideation_broker::BrokerError;
use ideation_core::store::StoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid stream configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("injected crash after producing batch {batch}, before its commit")]
    InjectedCrash { batch: u64 },
    #[error("stream stage `{0}` stopped unexpectedly")]
    StageFailed(&'static str),
}

pub type Result<T, E = StreamError> = std::result::Result<T, E>;
