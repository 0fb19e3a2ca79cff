"""Graph-based edge-count scan statistics for change-point detection."""
