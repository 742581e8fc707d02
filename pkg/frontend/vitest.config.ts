import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    // the e2e file boots a real market server, so hooks get generous time
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
