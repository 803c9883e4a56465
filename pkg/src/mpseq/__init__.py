"""Learn, regenerate and join 2-D motion primitives."""
