use std::thread;
use std::time::Duration;

/// Exponential backoff for transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self { attempts, initial_backoff: Duration::ZERO }
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the
    /// attempt budget is spent.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, E>,
        retryable: impl Fn(&E) -> bool,
    ) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut delay = self.initial_backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < attempts && retryable(&e) => {
                    tracing::warn!(attempt, "transient failure, retrying in {delay:?}");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_budget() {
        let mut calls = 0;
        let out: Result<(), &str> = RetryPolicy::immediate(3).run(
            |_| {
                calls += 1;
                Err("down")
            },
            |_| true,
        );
        assert!(out.is_err());
        assert_eq!(calls, 3);
    }

    #[test]
    fn non_retryable_fails_fast() {
        let mut calls = 0;
        let _: Result<(), &str> = RetryPolicy::immediate(3).run(
            |_| {
                calls += 1;
                Err("bad request")
            },
            |_| false,
        );
        assert_eq!(calls, 1);
    }

    #[test]
    fn recovers() {
        let out: Result<u32, &str> =
            RetryPolicy::immediate(3).run(|n| if n < 3 { Err("x") } else { Ok(n) }, |_| true);
        assert_eq!(out, Ok(3));
    }
}
