# Refinement services
