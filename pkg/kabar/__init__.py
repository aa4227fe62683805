# KaBaR perfectly balanced partition refinement
