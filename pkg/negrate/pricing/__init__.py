"""Black-Scholes analytics, regime classification and the boundary
approximations that do not need the integral equation."""
