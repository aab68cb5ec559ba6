"""Heat-kernel Besov and Triebel-Lizorkin type spaces on finite metric measure spaces."""
