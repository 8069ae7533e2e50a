"""Report writers for command outputs."""
