//! Wall-clock shim. `std::time::Instant` is unavailable on
//! wasm32-unknown-unknown, where phase timings are reported as zero and the
//! host page measures latency itself.

#[cfg(not(target_arch = "wasm32"))]
mod imp {
    use std::time::Instant;

    pub struct Stopwatch(Instant);

    impl Stopwatch {
        pub fn start() -> Self {
            Self(Instant::now())
        }

        pub fn elapsed_ms(&self) -> f64 {
            self.0.elapsed().as_secs_f64() * 1e3
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod imp {
    pub struct Stopwatch;

    impl Stopwatch {
        pub fn start() -> Self {
            Self
        }

        pub fn elapsed_ms(&self) -> f64 {
            0.0
        }
    }
}

pub(crate) use imp::Stopwatch;
