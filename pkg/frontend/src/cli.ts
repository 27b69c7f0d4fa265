#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { exportEmbeddings } from "./exporter.js";

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .command("export", "encode a dataset and write the embedding TSV", (y) =>
      y
        .option("dataset", { type: "string", demandOption: true })
        .option("model", { type: "string", default: "hash-64" })
        .option("out", { type: "string", demandOption: true })
        .option("batch", { type: "number", default: 32 })
    )
    .demandCommand(1)
    .strict()
    .fail((msg) => {
      throw new Error(msg);
    });

  const args = await parser.parse();
  const n = exportEmbeddings({
    dataset: args.dataset as string,
    model: args.model as string,
    out: args.out as string,
    batch: args.batch as number,
  });
  console.error(`wrote ${n} embedding rows to ${args.out}`);
  return 0;
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js");
if (invokedDirectly) {
  main(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    });
}
