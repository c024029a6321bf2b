//! Minimal leveled logging to stderr, controlled by the `FNLS_LOG`
//! environment variable (`error`, `info`, or `debug`; default `error`).

use std::sync::OnceLock;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("FNLS_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("info") => Level::Info,
        _ => Level::Error,
    })
}

pub fn enabled(l: Level) -> bool {
    l <= level()
}

pub fn info(args: std::fmt::Arguments) {
    if enabled(Level::Info) {
        eprintln!("[fnls] {args}");
    }
}

pub fn debug(args: std::fmt::Arguments) {
    if enabled(Level::Debug) {
        eprintln!("[fnls:debug] {args}");
    }
}

#[macro_export]
macro_rules! info {
    ($($t:tt)*) => { $crate::log::info(format_args!($($t)*)) };
}

#[macro_export]
macro_rules! debug {
    ($($t:tt)*) => { $crate::log::debug(format_args!($($t)*)) };
}
