use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// A set-once flag shared between the scheduler and worker managers.
#[derive(Debug, Clone, Default)]
pub struct CancelSwitch(Arc<AtomicBool>);

impl CancelSwitch {
    pub fn new() -> CancelSwitch {
        CancelSwitch::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Release);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Acquire)
    }
}
