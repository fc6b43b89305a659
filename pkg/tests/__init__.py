# Test suite for netlist-fi
