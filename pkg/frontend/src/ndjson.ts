// Incremental NDJSON line splitter: chunks in, complete lines out.
// The gateway terminates every line with "\n", so flush() only matters
// if a stream is cut mid-line.

export interface LineSplitter {
  push(chunk: string): void;
  flush(): void;
}

export function makeLineSplitter(onLine: (line: string) => void): LineSplitter {
  let buffer = "";
  return {
    push(chunk: string) {
      buffer += chunk;
      let nl: number;
      while ((nl = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, nl);
        buffer = buffer.slice(nl + 1);
        if (line.length > 0) onLine(line);
      }
    },
    flush() {
      if (buffer.length > 0) {
        onLine(buffer);
        buffer = "";
      }
    },
  };
}
