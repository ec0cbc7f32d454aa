"""Form scans, preprocessing, synthetic writers and IDX dataset files."""
