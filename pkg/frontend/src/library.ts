/**
 * AI-suggestion library panel state. Dismissed/used flags persist locally
 * per project through an injectable key-value store (localStorage in the
 * browser, a Map in tests); the server schema stays untouched.
 */

import type { SuggestionDoc } from "./types.js";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface Flags {
  dismissed: string[];
  used: string[];
}

export class SuggestionLibrary {
  private items: SuggestionDoc[] = [];
  private flags: Flags = { dismissed: [], used: [] };

  constructor(
    private projectId: string,
    private store: KeyValueStore
  ) {
    const raw = store.getItem(this.storageKey);
    if (raw) {
      try {
        this.flags = JSON.parse(raw) as Flags;
      } catch {
        // corrupted local state: start fresh
      }
    }
  }

  private get storageKey(): string {
    return `mangaroll:library:${this.projectId}`;
  }

  private persist(): void {
    this.store.setItem(this.storageKey, JSON.stringify(this.flags));
  }

  setItems(items: SuggestionDoc[]): void {
    this.items = items;
  }

  /** Library entries still worth showing (not dismissed). */
  visible(): SuggestionDoc[] {
    const hidden = new Set(this.flags.dismissed);
    return this.items.filter((s) => !hidden.has(this.keyOf(s)));
  }

  keyOf(s: SuggestionDoc): string {
    return s.id ?? s.prompt_text;
  }

  dismiss(s: SuggestionDoc): void {
    const key = this.keyOf(s);
    if (!this.flags.dismissed.includes(key)) this.flags.dismissed.push(key);
    this.persist();
  }

  markUsed(s: SuggestionDoc): void {
    const key = this.keyOf(s);
    if (!this.flags.used.includes(key)) this.flags.used.push(key);
    this.persist();
  }

  isUsed(s: SuggestionDoc): boolean {
    return this.flags.used.includes(this.keyOf(s));
  }
}
