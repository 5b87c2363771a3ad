//! Fan-out of encoded pose lines. Publishing never blocks: each consumer has
//! a bounded queue, and a consumer whose queue is full when a new line
//! arrives is dropped on the spot.

use std::sync::{Arc, Mutex};

use tokio::sync::mpsc::{self, error::TrySendError};
use tokio::task::AbortHandle;

/// Records a consumer may fall behind before it is disconnected.
pub const DEFAULT_BACKLOG: usize = 1024;

pub type Line = Arc<str>;

struct Consumer {
    id: u64,
    tx: mpsc::Sender<Line>,
    writer: Option<AbortHandle>,
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    consumers: Vec<Consumer>,
    published: u64,
    overflowed: u64,
}

pub struct Hub {
    backlog: usize,
    inner: Mutex<Inner>,
}

/// Receiving end of one consumer. Every line published after
/// [`Hub::subscribe`] returned arrives here in publish order.
pub struct Subscription {
    pub id: u64,
    pub rx: mpsc::Receiver<Line>,
}

impl Hub {
    pub fn new(backlog: usize) -> Arc<Self> {
        Arc::new(Self {
            backlog: backlog.max(1),
            inner: Mutex::new(Inner::default()),
        })
    }

    pub fn backlog(&self) -> usize {
        self.backlog
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic while holding the lock leaves the consumer list consistent.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> Subscription {
        let (tx, rx) = mpsc::channel(self.backlog);
        let mut inner = self.lock();
        let id = inner.next_id;
        inner.next_id += 1;
        inner.consumers.push(Consumer { id, tx, writer: None });
        Subscription { id, rx }
    }

    /// Ties the consumer's writer task to its queue: the task is aborted,
    /// closing its connection, when the queue overflows.
    pub fn attach_writer(&self, id: u64, writer: AbortHandle) {
        let mut inner = self.lock();
        match inner.consumers.iter_mut().find(|c| c.id == id) {
            Some(c) => c.writer = Some(writer),
            None => writer.abort(),
        }
    }

    /// Queues `line` for every consumer and returns how many were
    /// disconnected for overflowing.
    pub fn publish(&self, line: Line) -> usize {
        let mut inner = self.lock();
        inner.published += 1;
        let mut overflowed = 0;
        inner.consumers.retain(|c| match c.tx.try_send(line.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                log::warn!("pose consumer {} exceeded its backlog, disconnecting", c.id);
                if let Some(w) = &c.writer {
                    w.abort();
                }
                overflowed += 1;
                false
            }
            Err(TrySendError::Closed(_)) => false,
        });
        inner.overflowed += overflowed as u64;
        overflowed
    }

    pub fn consumer_count(&self) -> usize {
        self.lock().consumers.iter().filter(|c| !c.tx.is_closed()).count()
    }

    pub fn published(&self) -> u64 {
        self.lock().published
    }

    /// Consumers disconnected for overflow since the hub was created.
    pub fn overflowed(&self) -> u64 {
        self.lock().overflowed
    }
}
