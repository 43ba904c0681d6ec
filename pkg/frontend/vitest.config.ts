import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        environment: "happy-dom",
        include: ["tests/**/*.test.ts"],
        testTimeout: 90_000,
        hookTimeout: 90_000,
    },
});
