//! Minimal SVG plotting.
