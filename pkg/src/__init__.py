# netlist-fi - SAT-based fault injection for gate-level netlists
