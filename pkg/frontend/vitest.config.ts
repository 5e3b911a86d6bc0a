import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./tests/global_setup.ts"],
    testTimeout: 600_000,
    hookTimeout: 180_000,
    // The trainer is CPU-heavy; one file at a time keeps timings stable.
    fileParallelism: false,
  },
});
