"""nikodym-lab test suite."""
