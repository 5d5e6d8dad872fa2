# Test package for roomstate
