import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
    // The live smoke trains a small fixture model before serving it.
    testTimeout: 30_000,
    hookTimeout: 180_000,
  },
});
