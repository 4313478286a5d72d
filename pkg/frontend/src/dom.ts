// DOM renderer: one render pass per state change, no game logic.

import type { GameApp, AppState } from "./app.js";
import type { GameClient } from "./client.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function mount(root: HTMLElement, app: GameApp, client: GameClient): void {
  root.innerHTML = "";
  const banner = el("div", "banner hidden");
  const layout = el("div", "layout");
  const left = el("div", "left");
  const chat = el("div", "chat");
  const inlineError = el("div", "inline-error hidden");
  const form = el("form", "turn-form");
  const input = el("input") as HTMLInputElement;
  input.placeholder = "Tell the King your story...";
  const send = el("button", "send", "Tell") as HTMLButtonElement;
  form.append(input, send);
  left.append(chat, inlineError, form);

  const right = el("div", "right");
  const sceneWrap = el("div", "scene-wrap");
  const scene = el("img", "scene") as HTMLImageElement;
  scene.alt = "the story world";
  sceneWrap.append(scene);
  const inventory = el("div", "inventory");
  const battlePanel = el("div", "battle hidden");
  const victory = el("div", "victory hidden");
  right.append(sceneWrap, inventory, battlePanel, victory);

  layout.append(left, right);
  root.append(banner, layout);

  form.onsubmit = (event) => {
    event.preventDefault();
    void app.submitTurn(input.value).then((sent) => {
      if (sent) {
        input.value = "";
      }
    });
  };

  app.onChange((state) => render(state));

  function render(state: AppState): void {
    const view = state.view;
    if (!view) {
      return;
    }
    banner.classList.toggle("hidden", !state.banner);
    banner.textContent = state.banner ?? "";

    chat.innerHTML = "";
    for (const message of view.messages) {
      const bubble = el(
        "div",
        `message ${message.role}${message.rejected ? " rejected" : ""}`,
      );
      if (message.text) {
        bubble.append(el("p", "text", message.text));
      }
      if (message.comment) {
        bubble.append(el("p", "comment", message.comment));
      }
      chat.append(bubble);
    }
    chat.scrollTop = chat.scrollHeight;

    inlineError.classList.toggle("hidden", !state.inlineError);
    inlineError.textContent = state.inlineError ?? "";
    input.maxLength = view.maxPlayerChars;
    const storytelling = view.phase === "storytelling";
    form.classList.toggle("hidden", !storytelling);
    input.disabled = send.disabled = state.inputDisabled || !storytelling;

    const sceneUrl = client.sceneUrl(view.sceneUrl);
    sceneWrap.classList.toggle("hidden", sceneUrl === null);
    if (sceneUrl !== null && scene.src !== sceneUrl) {
      scene.src = sceneUrl; // version-busted by the server-provided URL
    }

    inventory.innerHTML = "";
    inventory.append(
      el("h3", undefined, `Arsenal ${view.weapons.length}/${view.weaponThreshold}`),
    );
    for (const kind of view.weapons) {
      inventory.append(el("span", "weapon-chip", kind));
    }

    const inBattle = view.phase === "battle" && view.battle !== null;
    battlePanel.classList.toggle("hidden", !inBattle);
    if (inBattle && view.battle) {
      battlePanel.innerHTML = "";
      battlePanel.append(
        el("h3", undefined, "Battle"),
        el("p", "hp", `You ${view.battle.playerHp} - King ${view.battle.kingHp}`),
      );
      for (const kind of view.battle.arsenal) {
        const card = el("div", "weapon-card");
        const strike = el("button", "strike", kind) as HTMLButtonElement;
        strike.disabled = state.inputDisabled || view.battle.used.includes(kind);
        strike.onclick = () => void app.submitBattleAction(kind);
        card.append(strike);
        const weaponError = state.weaponErrors[kind];
        if (weaponError) {
          card.append(el("p", "weapon-error", weaponError));
        }
        battlePanel.append(card);
      }
    }

    victory.classList.toggle("hidden", !view.victory && !view.defeat);
    if (view.victory) {
      victory.textContent = "The King falls. Your story rewrote the world.";
    } else if (view.defeat) {
      victory.textContent = "Your tale ends here.";
    }
  }
}
