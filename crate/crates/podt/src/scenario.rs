//! Built-in experiment suites.
