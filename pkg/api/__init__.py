"""Flask inspection API for siri-bench."""
