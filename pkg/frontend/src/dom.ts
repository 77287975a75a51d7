/** Tiny DOM construction helpers — enough structure without a framework. */

type Child = Node | string | null | undefined;

export function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    attrs: Record<string, string> = {},
    ...children: Child[]
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        if (key === 'class') node.className = value;
        else node.setAttribute(key, value);
    }
    for (const child of children) {
        if (child === null || child === undefined) continue;
        node.append(child);
    }
    return node;
}

export function clear(node: HTMLElement): void {
    while (node.firstChild) node.removeChild(node.firstChild);
}

export function errorBanner(message: string): HTMLElement {
    return el('div', { class: 'banner banner-error', role: 'alert' }, message);
}

export function notice(message: string): HTMLElement {
    return el('div', { class: 'banner banner-notice' }, message);
}
